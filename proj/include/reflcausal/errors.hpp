#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reflcausal {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input that fails validation (bad file, bad arguments). The CLI maps
/// these to exit code 1; everything else is a runtime failure.
class ValidationError : public Error {
  public:
    using Error::Error;
};

class MalformedRecord : public ValidationError {
  public:
    MalformedRecord(std::size_t line, const std::string &reason)
        : ValidationError("line " + std::to_string(line) + ": " + reason), line_(line),
          reason_(reason) {}

    std::size_t line() const { return line_; }
    const std::string &reason() const { return reason_; }

  private:
    std::size_t line_;
    std::string reason_;
};

class UnknownPattern : public ValidationError {
  public:
    explicit UnknownPattern(const std::string &name)
        : ValidationError("unknown pattern: " + name), name_(name) {}
    const std::string &name() const { return name_; }

  private:
    std::string name_;
};

class DuplicateTrajectoryId : public ValidationError {
  public:
    explicit DuplicateTrajectoryId(const std::string &id)
        : ValidationError("duplicate trajectory id: " + id) {}
};

class InconsistentSchema : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class MissingOutcome : public ValidationError {
  public:
    explicit MissingOutcome(const std::string &name)
        : ValidationError("outcome missing: " + name) {}
};

class TooFewRows : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class IndivisibleGrouping : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class DomainError : public Error {
  public:
    using Error::Error;
};

class DegenerateGroup : public Error {
  public:
    using Error::Error;
};

class DegenerateInput : public Error {
  public:
    using Error::Error;
};

class RankDeficient : public Error {
  public:
    using Error::Error;
};

class EmptyData : public Error {
  public:
    using Error::Error;
};

class SchemaMismatch : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class NotExtendable : public Error {
  public:
    using Error::Error;
};

class ConstraintViolation : public Error {
  public:
    using Error::Error;
};

class SingularDesign : public Error {
  public:
    explicit SingularDesign(std::size_t fold)
        : Error("singular design in fold " + std::to_string(fold)), fold_(fold) {}
    std::size_t fold() const { return fold_; }

  private:
    std::size_t fold_;
};

class TooManyFactors : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class EmptyFactors : public ValidationError {
  public:
    EmptyFactors() : ValidationError("factorial design needs at least one factor") {}
};

class IncompleteMatrix : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class MissingGroundTruth : public ValidationError {
  public:
    MissingGroundTruth() : ValidationError("exact-match scoring requires a ground truth") {}
};

class MissingMetricValues : public ValidationError {
  public:
    explicit MissingMetricValues(const std::string &metric)
        : ValidationError("missing metric values for " + metric) {}
};

class MatcherFailure : public Error {
  public:
    MatcherFailure(const std::string &pattern, int round, const std::string &cause)
        : Error("pattern matcher failed for " + pattern + "@" + std::to_string(round) + ": " +
                cause),
          pattern_(pattern), round_(round) {}
    const std::string &pattern() const { return pattern_; }
    int round() const { return round_; }

  private:
    std::string pattern_;
    int round_;
};

} // namespace reflcausal
