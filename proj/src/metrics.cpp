#include "hzrd/metrics.hpp"

#include "hzrd/error.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace hzrd {

namespace {

// Counts over ranked scores.
class Fenwick {
public:
    explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
    void add(std::size_t i) {
        for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
    }
    // Number of inserted ranks < i.
    std::uint64_t prefix(std::size_t i) const {
        std::uint64_t s = 0;
        for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }

private:
    std::vector<std::uint64_t> tree_;
};

double concordance(const RiskScoreSet& s, double tau, TieMode ties) {
    s.check();
    const std::size_t n = s.size();
    std::vector<double> ranked = s.scores;
    std::sort(ranked.begin(), ranked.end());
    ranked.erase(std::unique(ranked.begin(), ranked.end()), ranked.end());
    std::vector<std::size_t> rank(n);
    for (std::size_t i = 0; i < n; ++i)
        rank[i] = static_cast<std::size_t>(std::lower_bound(ranked.begin(), ranked.end(), s.scores[i]) -
                                           ranked.begin());

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.times[a] > s.times[b]; });

    // Walk times from the latest down; everything inserted has a strictly larger time.
    Fenwick inserted(ranked.size());
    std::uint64_t inserted_count = 0;
    std::uint64_t comparable = 0;
    std::uint64_t concordant = 0;
    std::uint64_t tied = 0;
    for (std::size_t p = 0; p < n;) {
        std::size_t q = p;
        while (q < n && s.times[order[q]] == s.times[order[p]]) ++q;
        for (std::size_t k = p; k < q; ++k) {
            const std::size_t j = order[k];
            if (!s.events[j] || s.times[j] > tau) continue;
            const std::uint64_t below = inserted.prefix(rank[j]);
            const std::uint64_t at_or_below = inserted.prefix(rank[j] + 1);
            comparable += inserted_count;
            concordant += below;
            tied += at_or_below - below;
        }
        for (std::size_t k = p; k < q; ++k) inserted.add(rank[order[k]]);
        inserted_count += q - p;
        p = q;
    }
    if (comparable == 0) throw std::domain_error("no comparable pairs");
    const double num = static_cast<double>(concordant) + (ties == TieMode::Half ? 0.5 * static_cast<double>(tied) : 0.0);
    return num / static_cast<double>(comparable);
}

std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

std::string horizon_label(double tau) { return shortest(tau); }

double parse_double(const std::string& text) {
    if (text.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (text == "nan" || text == "NaN") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw DataError(DataError::Code::Parse, "malformed number '" + text + "' in metric file");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

void RiskScoreSet::check() const {
    if (times.size() != scores.size() || events.size() != scores.size())
        throw std::invalid_argument("risk score set has unequal lengths");
    for (double v : scores)
        if (!std::isfinite(v)) throw std::invalid_argument("risk scores must be finite");
}

double harrell_c_index(const RiskScoreSet& s, TieMode ties) {
    return concordance(s, std::numeric_limits<double>::infinity(), ties);
}

double truncated_c_index(const RiskScoreSet& s, double tau, TieMode ties) { return concordance(s, tau, ties); }

double cumulative_dynamic_auc(const RiskScoreSet& s, double tau, const KaplanMeierCurve& censoring, TieMode ties) {
    s.check();
    std::vector<double> controls;
    for (std::size_t j = 0; j < s.size(); ++j)
        if (s.times[j] > tau) controls.push_back(s.scores[j]);
    std::sort(controls.begin(), controls.end());

    double weighted = 0.0;
    double weight_total = 0.0;
    std::size_t cases = 0;
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!s.events[i] || s.times[i] > tau) continue;
        const double g = censoring.left_limit(s.times[i]);
        if (!(g > 0.0)) {
            ++dropped;
            continue;
        }
        ++cases;
        const double w = 1.0 / g;
        const auto lo = std::lower_bound(controls.begin(), controls.end(), s.scores[i]);
        const auto hi = std::upper_bound(lo, controls.end(), s.scores[i]);
        double hits = static_cast<double>(lo - controls.begin());
        if (ties == TieMode::Half) hits += 0.5 * static_cast<double>(hi - lo);
        weighted += w * hits;
        weight_total += w;
    }
    if (dropped > 0)
        spdlog::warn("AUC@{}: dropped {} case(s) with zero censoring survival (undefined IPCW weight)",
                     horizon_label(tau), dropped);
    if (cases == 0) throw std::domain_error("no cases at or before tau");
    if (controls.empty()) throw std::domain_error("no controls beyond tau");
    return weighted / (weight_total * static_cast<double>(controls.size()));
}

MetricReport aggregate_folds(const std::string& metric, const std::vector<double>& values) {
    if (values.size() < 2) throw std::invalid_argument("aggregate_folds needs at least 2 folds");
    MetricReport r;
    r.metric = metric;
    r.fold_values = values;
    std::vector<double> finite;
    for (double v : values)
        if (std::isfinite(v)) finite.push_back(v);
    if (finite.size() < 2) {
        r.mean = finite.empty() ? std::numeric_limits<double>::quiet_NaN() : finite.front();
        r.half_width = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    const double k = static_cast<double>(finite.size());
    // Offsets from the first value keep the mean of identical folds exact.
    double offset = 0.0;
    for (double v : finite) offset += v - finite.front();
    r.mean = finite.front() + offset / k;
    double ss = 0.0;
    for (double v : finite) ss += (v - r.mean) * (v - r.mean);
    const double sd = std::sqrt(ss / (k - 1.0));
    r.half_width = 1.96 * sd / std::sqrt(k);
    return r;
}

MetricReport single_evaluation(const std::string& metric, double value) {
    MetricReport r;
    r.metric = metric;
    r.fold_values = {value};
    r.mean = value;
    r.half_width = std::isfinite(value) ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    return r;
}

std::vector<NamedValue> evaluate_metrics(const RiskScoreSet& test, const KaplanMeierCurve& censoring,
                                         const MetricSettings& settings) {
    std::vector<NamedValue> out;
    auto guarded = [&](const std::string& name, auto&& fn) {
        NamedValue nv{name};
        try {
            nv.value = fn();
        } catch (const std::domain_error& e) {
            spdlog::warn("{} undefined on this data: {}", name, e.what());
        }
        out.push_back(std::move(nv));
    };
    guarded("c_index", [&] { return harrell_c_index(test, settings.ties); });
    for (double tau : settings.c_index_horizons)
        guarded("c_index@" + horizon_label(tau), [&] { return truncated_c_index(test, tau, settings.ties); });
    for (double tau : settings.auc_horizons)
        guarded("auc@" + horizon_label(tau),
                [&] { return cumulative_dynamic_auc(test, tau, censoring, settings.ties); });
    return out;
}

void write_metric_csv(std::ostream& out, const MetricTable& table) {
    out << "model,metric,fold,value,mean,ci_low,ci_high\n";
    for (const auto& r : table.reports) {
        const bool single = r.folds() <= 1;
        if (!single) {
            for (std::size_t f = 0; f < r.folds(); ++f)
                out << table.model << ',' << r.metric << ',' << (f + 1) << ',' << shortest(r.fold_values[f])
                    << ",,,\n";
        }
        out << table.model << ',' << r.metric << ",all," << shortest(r.mean) << ',' << shortest(r.mean) << ','
            << shortest(r.ci_low()) << ',' << shortest(r.ci_high()) << '\n';
    }
}

void write_metric_json(std::ostream& out, const MetricTable& table) {
    auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
    nlohmann::json doc;
    doc["model"] = table.model;
    doc["metrics"] = nlohmann::json::array();
    for (const auto& r : table.reports) {
        nlohmann::json m;
        m["metric"] = r.metric;
        m["folds"] = nlohmann::json::array();
        for (std::size_t f = 0; f < r.folds(); ++f) m["folds"].push_back({{"fold", f + 1}, {"value", num(r.fold_values[f])}});
        m["mean"] = num(r.mean);
        m["half_width"] = num(r.half_width);
        m["ci_low"] = num(r.ci_low());
        m["ci_high"] = num(r.ci_high());
        doc["metrics"].push_back(std::move(m));
    }
    out << doc.dump(2) << '\n';
}

std::vector<MetricTable> read_metric_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("model,metric,fold,value,mean,ci_low,ci_high", 0) != 0)
        throw DataError(DataError::Code::Parse, "metric file lacks the expected header");

    std::vector<MetricTable> tables;
    std::map<std::pair<std::string, std::string>, std::vector<double>> pending;
    auto table_for = [&](const std::string& model) -> MetricTable& {
        for (auto& t : tables)
            if (t.model == model) return t;
        tables.push_back({model, {}});
        return tables.back();
    };
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        // Concatenated files repeat the header.
        if (line.rfind("model,metric,fold,", 0) == 0) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 7)
            throw DataError(DataError::Code::Parse, "metric file line " + std::to_string(lineno) + ": expected 7 fields");
        const auto key = std::make_pair(f[0], f[1]);
        if (f[2] == "all") {
            MetricReport r;
            r.metric = f[1];
            r.fold_values = std::move(pending[key]);
            r.mean = parse_double(f[4]);
            const double hi = parse_double(f[6]);
            const double lo = parse_double(f[5]);
            r.half_width = 0.5 * (hi - lo);
            if (r.fold_values.empty()) r.fold_values.push_back(parse_double(f[3]));
            table_for(f[0]).reports.push_back(std::move(r));
        } else {
            pending[key].push_back(parse_double(f[3]));
        }
    }
    if (tables.empty()) throw DataError(DataError::Code::Parse, "metric file has no aggregate rows");
    return tables;
}

std::string format_report_table(const std::vector<MetricTable>& tables) {
    std::vector<std::string> metrics;
    for (const auto& t : tables)
        for (const auto& r : t.reports)
            if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end()) metrics.push_back(r.metric);

    auto lookup = [](const MetricTable& t, const std::string& m) -> const MetricReport* {
        for (const auto& r : t.reports)
            if (r.metric == m) return &r;
        return nullptr;
    };
    std::vector<const MetricTable*> rows;
    for (const auto& t : tables) rows.push_back(&t);
    std::stable_sort(rows.begin(), rows.end(), [&](const MetricTable* a, const MetricTable* b) {
        const auto* ra = lookup(*a, "c_index");
        const auto* rb = lookup(*b, "c_index");
        const double va = ra ? ra->mean : -1.0;
        const double vb = rb ? rb->mean : -1.0;
        return va > vb;
    });

    auto cell = [](const MetricReport* r) {
        if (!r) return std::string("-");
        std::ostringstream s;
        s << std::fixed << std::setprecision(3) << r->mean << " +- " << r->half_width;
        return s.str();
    };
    std::size_t name_w = 5;
    for (const auto* t : rows) name_w = std::max(name_w, t->model.size());
    std::vector<std::size_t> col_w;
    for (const auto& m : metrics) {
        std::size_t w = m.size();
        for (const auto* t : rows) w = std::max(w, cell(lookup(*t, m)).size());
        col_w.push_back(w);
    }

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(name_w)) << "model";
    for (std::size_t c = 0; c < metrics.size(); ++c) out << "  " << std::setw(static_cast<int>(col_w[c])) << metrics[c];
    out << '\n';
    for (const auto* t : rows) {
        out << std::setw(static_cast<int>(name_w)) << t->model;
        for (std::size_t c = 0; c < metrics.size(); ++c)
            out << "  " << std::setw(static_cast<int>(col_w[c])) << cell(lookup(*t, metrics[c]));
        out << '\n';
    }
    return out.str();
}

}  // namespace hzrd
