#include "reflcausal/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "reflcausal/errors.hpp"
#include "reflcausal/special_functions.hpp"

namespace reflcausal {

using special::log_gamma;

const char *to_string(ScoreKind kind) {
    switch (kind) {
    case ScoreKind::BDs:
        return "BDs";
    case ScoreKind::BDeu:
        return "BDeu";
    case ScoreKind::BIC:
        return "BIC";
    case ScoreKind::K2:
        return "K2";
    }
    return "?";
}

ScoreKind parse_score_kind(const std::string &name) {
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "bds") return ScoreKind::BDs;
    if (lower == "bdeu") return ScoreKind::BDeu;
    if (lower == "bic") return ScoreKind::BIC;
    if (lower == "k2") return ScoreKind::K2;
    throw ValidationError("unknown score function: " + name);
}

std::uint64_t CountTable::total() const {
    std::uint64_t t = 0;
    for (std::size_t j = 0; j < configs.size(); ++j) t += n0[j] + n1[j];
    return t;
}

CountTable count_table(const BinaryDataset &data, std::size_t v, const NodeSet &parents) {
    if (parents.size() > 63) throw DomainError("at most 63 parents are supported");
    if (v >= data.n_cols()) throw DomainError("variable index out of range");
    const std::size_t n = data.n_rows();
    std::vector<std::uint64_t> codes(n, 0);
    for (std::size_t i = 0; i < parents.size(); ++i) {
        const auto col = data.column(parents[i]);
        for (std::size_t r = 0; r < n; ++r) codes[r] |= static_cast<std::uint64_t>(col[r]) << i;
    }
    const auto target = data.column(v);
    CountTable t;
    if (parents.size() <= 16) {
        const std::size_t q = std::size_t{1} << parents.size();
        std::vector<std::uint32_t> c0(q, 0), c1(q, 0);
        for (std::size_t r = 0; r < n; ++r) (target[r] ? c1 : c0)[codes[r]]++;
        for (std::size_t j = 0; j < q; ++j) {
            if (c0[j] + c1[j] == 0) continue;
            t.configs.push_back(j);
            t.n0.push_back(c0[j]);
            t.n1.push_back(c1[j]);
        }
        return t;
    }
    std::vector<std::pair<std::uint64_t, std::uint8_t>> rows(n);
    for (std::size_t r = 0; r < n; ++r) rows[r] = {codes[r], target[r]};
    std::sort(rows.begin(), rows.end());
    for (const auto &[code, bit] : rows) {
        if (t.configs.empty() || t.configs.back() != code) {
            t.configs.push_back(code);
            t.n0.push_back(0);
            t.n1.push_back(0);
        }
        (bit ? t.n1 : t.n0).back()++;
    }
    return t;
}

double local_score(const CountTable &table, std::size_t n_parents, const ScoreFn &fn) {
    const std::uint64_t n = table.total();
    if (n == 0) throw EmptyData("cannot score a variable on zero rows");
    constexpr double r = 2.0;
    const double q_full = std::ldexp(1.0, static_cast<int>(n_parents));
    double s = 0.0;
    switch (fn.kind) {
    case ScoreKind::BDs:
    case ScoreKind::BDeu: {
        if (!(fn.alpha > 0.0)) throw DomainError("alpha must be positive");
        const double q = fn.kind == ScoreKind::BDs ? static_cast<double>(table.n_configs()) : q_full;
        const double a_j = fn.alpha / q;
        const double a_jk = a_j / r;
        const double lg_aj = log_gamma(a_j);
        const double lg_ajk = log_gamma(a_jk);
        for (std::size_t j = 0; j < table.n_configs(); ++j) {
            const double nj = static_cast<double>(table.n0[j] + table.n1[j]);
            s += lg_aj - log_gamma(a_j + nj);
            s += log_gamma(a_jk + table.n0[j]) - lg_ajk;
            s += log_gamma(a_jk + table.n1[j]) - lg_ajk;
        }
        break;
    }
    case ScoreKind::K2: {
        for (std::size_t j = 0; j < table.n_configs(); ++j) {
            const double nj = static_cast<double>(table.n0[j] + table.n1[j]);
            s += log_gamma(r) - log_gamma(nj + r);
            s += log_gamma(1.0 + table.n0[j]) + log_gamma(1.0 + table.n1[j]);
        }
        break;
    }
    case ScoreKind::BIC: {
        for (std::size_t j = 0; j < table.n_configs(); ++j) {
            const double nj = static_cast<double>(table.n0[j] + table.n1[j]);
            for (double nk : {static_cast<double>(table.n0[j]), static_cast<double>(table.n1[j])}) {
                if (nk > 0) s += nk * std::log(nk / nj);
            }
        }
        s -= 0.5 * std::log(static_cast<double>(n)) * q_full * (r - 1.0);
        break;
    }
    }
    return s;
}

double local_score(const BinaryDataset &data, std::size_t v, const NodeSet &parents, const ScoreFn &fn) {
    if (data.n_rows() == 0) throw EmptyData("cannot score an empty dataset");
    if (contains_node(parents, v)) throw DomainError("a variable cannot be its own parent");
    return local_score(count_table(data, v, parents), parents.size(), fn);
}

double total_score(const BinaryDataset &data, const Pdag &g, const ScoreFn &fn) {
    if (g.n_vars() != data.n_cols()) throw DomainError("graph and dataset sizes differ");
    const Pdag dag = g.undirected_edges().empty() ? g : extend_to_dag(g);
    double s = 0.0;
    for (std::size_t v = 0; v < dag.n_vars(); ++v) s += local_score(data, v, dag.parents(v), fn);
    return s;
}

std::size_t ScoreCache::KeyHash::operator()(const std::vector<std::size_t> &key) const {
    std::size_t h = 1469598103934665603ULL;
    for (auto k : key) h = (h ^ k) * 1099511628211ULL;
    return h;
}

double ScoreCache::local(std::size_t v, const NodeSet &parents) {
    std::vector<std::size_t> key;
    key.reserve(parents.size() + 1);
    key.push_back(v);
    key.insert(key.end(), parents.begin(), parents.end());
    {
        std::lock_guard lock(mutex_);
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    const double s = local_score(data_, v, parents, fn_);
    std::lock_guard lock(mutex_);
    memo_.emplace(std::move(key), s);
    return s;
}

std::size_t ScoreCache::size() const {
    std::lock_guard lock(mutex_);
    return memo_.size();
}

double cvll(const BinaryDataset &train, const BinaryDataset &test, std::size_t outcome, const NodeSet &parents,
            double alpha) {
    if (!train.same_schema(test)) throw SchemaMismatch("train and test datasets have different columns");
    if (train.n_rows() == 0 || test.n_rows() == 0) throw EmptyData("cvll needs nonempty train and test sets");
    if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
    const CountTable table = count_table(train, outcome, parents);
    constexpr double r = 2.0;
    const double q = static_cast<double>(table.n_configs());
    const double a_jk = alpha / (q * r);
    double total0 = 0.0;
    double total1 = 0.0;
    for (std::size_t j = 0; j < table.n_configs(); ++j) {
        total0 += table.n0[j];
        total1 += table.n1[j];
    }
    const double n = total0 + total1;
    const double marginal1 = (total1 + alpha / r) / (n + alpha);

    const CountTable probe = count_table(test, outcome, parents);
    double ll = 0.0;
    for (std::size_t j = 0; j < probe.n_configs(); ++j) {
        auto it = std::lower_bound(table.configs.begin(), table.configs.end(), probe.configs[j]);
        double p1 = marginal1;
        if (it != table.configs.end() && *it == probe.configs[j]) {
            const auto idx = static_cast<std::size_t>(it - table.configs.begin());
            const double nj = static_cast<double>(table.n0[idx] + table.n1[idx]);
            p1 = (table.n1[idx] + a_jk) / (nj + 2.0 * a_jk);
        }
        ll += probe.n1[j] * std::log(p1) + probe.n0[j] * std::log1p(-p1);
    }
    return ll / static_cast<double>(test.n_rows());
}

std::string score_trace(const BinaryDataset &data, const Pdag &dag, const ScoreFn &fn) {
    const auto labels = data.labels();
    std::ostringstream out;
    double total = 0.0;
    for (std::size_t v = 0; v < dag.n_vars(); ++v) {
        const NodeSet pa = dag.parents(v);
        const double s = local_score(data, v, pa, fn);
        total += s;
        std::string names;
        for (auto p : pa) names += (names.empty() ? "" : ",") + labels[p];
        out << fmt::format("{} {} | {{{}}} = {:.10f}\n", to_string(fn.kind), labels[v], names, s);
    }
    out << fmt::format("total = {:.10f}\n", total);
    return out.str();
}

} // namespace reflcausal
