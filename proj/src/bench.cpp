#include "sdo/bench.hpp"

#include "sdo/io.hpp"
#include "sdo/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace sdo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_or_empty(double v) { return std::isnan(v) ? std::string() : fmt_double(v); }

int index_of(const std::vector<int>& v, int n) {
    const auto it = std::find(v.begin(), v.end(), n);
    return it == v.end() ? -1 : static_cast<int>(it - v.begin());
}

}  // namespace

double delta_j_rel(double J_cold, double J_strat) {
    if (!(J_cold > 0.0)) throw std::domain_error("relative gain needs a positive baseline cost");
    return (J_cold - J_strat) / J_cold;
}

ViolationStats violation_stats(const std::vector<double>& norms) {
    ViolationStats s;
    s.count = norms.size();
    if (norms.empty()) return s;
    double sum = 0.0;
    std::size_t positive = 0;
    for (double v : norms) {
        sum += v;
        if (v > 0.0) ++positive;
    }
    s.expected = sum / static_cast<double>(norms.size());
    s.probability = static_cast<double>(positive) / static_cast<double>(norms.size());
    return s;
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) return kNaN;
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

QuantileSummary summarize(const std::vector<double>& values) {
    QuantileSummary s;
    s.count = values.size();
    if (values.empty()) {
        s.worst = s.q25 = s.median = s.q75 = kNaN;
        return s;
    }
    s.worst = *std::min_element(values.begin(), values.end());
    s.q25 = quantile(values, 0.25);
    s.median = quantile(values, 0.5);
    s.q75 = quantile(values, 0.75);
    return s;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("spearman: size mismatch");
    if (x.size() < 2) return kNaN;
    const auto rx = average_ranks(x), ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return kNaN;
    return sxy / std::sqrt(sxx * syy);
}

Strategy Strategy::parse(const std::string& name) {
    Strategy s;
    s.name = name;
    if (name == "cold") {
        s.kind = StrategyKind::Cold;
    } else if (name == "shift") {
        s.kind = StrategyKind::Shift;
    } else if (name == "bc") {
        s.kind = StrategyKind::Bc;
    } else if (name.rfind("sdo_", 0) == 0) {
        s.kind = StrategyKind::Sdo;
        std::size_t pos = 0;
        double pct = 0.0;
        try {
            pct = std::stod(name.substr(4), &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != name.size() - 4 || !(pct > 0.0) || pct > 100.0) {
            throw ConfigError("bad sdo strategy '" + name + "' (expected sdo_<percent>)");
        }
        s.fraction = pct / 100.0;
    } else {
        throw ConfigError("unknown strategy '" + name + "'");
    }
    return s;
}

std::vector<Strategy> default_strategies() {
    return {Strategy::parse("cold"), Strategy::parse("shift"), Strategy::parse("bc"), Strategy::parse("sdo_1"),
            Strategy::parse("sdo_5")};
}

void BenchOptions::validate() const {
    std::vector<std::string> bad;
    if (iterations < 0) bad.emplace_back("iterations must be >= 0");
    for (int n : record_at) {
        if (n < 0 || n > iterations) bad.push_back("record_at " + std::to_string(n) + " outside [0, iterations]");
    }
    for (int n : violation_at) {
        if (n < 0 || n > iterations) bad.push_back("violation_at " + std::to_string(n) + " outside [0, iterations]");
    }
    if (!(violation_scale > 0)) bad.emplace_back("violation_scale must be positive");
    if (!bad.empty()) {
        std::ostringstream os;
        os << "invalid bench options:";
        for (const auto& b : bad) os << " [" << b << "]";
        throw ConfigError(os.str());
    }
}

std::vector<double> BenchReport::deltas(const std::string& strategy, Perturbation kind, int n) const {
    const int i = index_of(options.record_at, n);
    std::vector<double> out;
    if (i < 0) return out;
    for (const auto& c : cells) {
        if (c.strategy != strategy || c.kind != kind || !c.ok) continue;
        if (!std::isnan(c.delta[i])) out.push_back(c.delta[i]);
    }
    return out;
}

const AggregateRow* BenchReport::aggregate(const std::string& strategy, Perturbation kind, int n) const {
    for (const auto& a : aggregates) {
        if (a.strategy == strategy && a.kind == kind && a.n == n) return &a;
    }
    return nullptr;
}

const ViolationRow* BenchReport::violation(const std::string& strategy, const std::string& scope, int n) const {
    for (const auto& v : violations) {
        if (v.strategy == strategy && v.scope == scope && v.n == n) return &v;
    }
    return nullptr;
}

namespace {

struct RunOutput {
    OptResult refined;
    SdoResult sdo;
    double init_seconds = 0.0;
    double refine_seconds = 0.0;
};

RunOutput run_strategy(const Strategy& s, const Scenario& sc, const BenchArtifacts& art, const BenchOptions& opt) {
    using clock = std::chrono::steady_clock;
    RunOutput out;
    const auto t0 = clock::now();
    ControlSequence u0;
    switch (s.kind) {
        case StrategyKind::Cold:
            u0 = cold_start(sc.spec);
            break;
        case StrategyKind::Shift:
            u0 = shift_init(sc.u_prev, sc.spec.box);
            break;
        case StrategyKind::Bc:
            if (!art.bc) throw std::runtime_error("strategy bc needs a trained BC network");
            u0 = art.bc->predict(sc);
            break;
        case StrategyKind::Sdo: {
            if (!art.surrogate) throw std::runtime_error("strategy " + s.name + " needs a trained surrogate");
            SdoOptions so = opt.sdo;
            so.fraction = s.fraction;
            so.full_iterations = opt.iterations;
            out.sdo = sdo_warmstart(*art.surrogate, sc, so);
            u0 = out.sdo.u;
            break;
        }
    }
    const auto t1 = clock::now();
    out.refined = refine_full(*art.model, sc, u0, opt.iterations, opt.refine);
    out.init_seconds = std::chrono::duration<double>(t1 - t0).count();
    out.refine_seconds = std::chrono::duration<double>(clock::now() - t1).count();
    return out;
}

}  // namespace

BenchReport run_benchmark(const std::vector<Scenario>& suite, const std::vector<Strategy>& strategies,
                          const BenchArtifacts& art, const BenchOptions& opt) {
    opt.validate();
    if (!art.model) throw std::invalid_argument("run_benchmark needs a model");
    BenchReport rep;
    rep.options = opt;
    for (const auto& s : strategies) rep.strategies.push_back(s.name);

    // The cold baseline is run once per scenario and reused as the "cold" strategy.
    const Strategy cold = Strategy::parse("cold");
    std::vector<Strategy> runs{cold};
    for (const auto& s : strategies) {
        if (s.kind != StrategyKind::Cold) runs.push_back(s);
    }
    const std::size_t S = suite.size(), R = runs.size();
    std::vector<RunOutput> outputs(S * R);
    std::vector<std::string> errors(S * R);
    std::vector<char> done(S * R, 0);
    parallel_for(S * R, opt.parallelism, [&](std::size_t idx) {
        const std::size_t i = idx / R, r = idx % R;
        try {
            outputs[idx] = run_strategy(runs[r], suite[i], art, opt);
            done[idx] = 1;
        } catch (const std::exception& e) {
            errors[idx] = e.what();
        }
    });

    for (std::size_t i = 0; i < S; ++i) {
        const auto& sc = suite[i];
        const bool cold_ok = done[i * R];
        const auto& cold_trace = outputs[i * R].refined.trace;
        for (const auto& s : strategies) {
            const std::size_t r =
                s.kind == StrategyKind::Cold
                    ? 0
                    : static_cast<std::size_t>(std::find_if(runs.begin(), runs.end(),
                                                            [&](const Strategy& x) { return x.name == s.name; }) -
                                               runs.begin());
            const std::size_t idx = i * R + r;
            CellResult c;
            c.scenario = sc.id;
            c.kind = sc.kind;
            c.strategy = s.name;
            c.J_pen.assign(opt.record_at.size(), kNaN);
            c.delta.assign(opt.record_at.size(), kNaN);
            c.violation.assign(opt.violation_at.size(), kNaN);
            if (!done[idx]) {
                c.error = errors[idx];
                rep.log.push_back("scenario " + std::to_string(sc.id) + " " + s.name + ": " + c.error);
            } else if (!cold_ok) {
                c.error = "cold baseline failed";
                rep.log.push_back("scenario " + std::to_string(sc.id) + " " + s.name + ": " + c.error);
            } else {
                const auto& o = outputs[idx];
                const auto& tr = o.refined.trace;
                c.iterations = static_cast<int>(tr.rows.size()) - 1;
                if (c.iterations != opt.iterations || static_cast<int>(cold_trace.rows.size()) - 1 != opt.iterations) {
                    throw std::logic_error("unequal iteration counts across strategies");
                }
                c.ok = true;
                c.sim_calls = tr.rows.back().sim_calls;
                c.sdo_iterations = o.sdo.iterations;
                c.fell_back = o.sdo.fell_back;
                if (o.sdo.fell_back) rep.log.push_back("scenario " + std::to_string(sc.id) + " " + s.name + ": " + o.sdo.warning);
                c.init_seconds = o.init_seconds;
                c.refine_seconds = o.refine_seconds;
                for (std::size_t k = 0; k < opt.record_at.size(); ++k) {
                    const int n = opt.record_at[k];
                    c.J_pen[k] = tr.at(n).best_J_pen;
                    const double jc = cold_trace.at(n).best_J_pen;
                    if (jc > 0.0) {
                        c.delta[k] = delta_j_rel(jc, c.J_pen[k]);
                    } else if (&s == &strategies.front()) {
                        rep.log.push_back("scenario " + std::to_string(sc.id) + " n=" + std::to_string(n) +
                                          ": cold cost is zero, dropped from gains");
                    }
                }
                for (std::size_t k = 0; k < opt.violation_at.size(); ++k) {
                    c.violation[k] = opt.violation_scale * tr.at(opt.violation_at[k]).best_violation;
                }
            }
            rep.cells.push_back(std::move(c));
        }
    }
    aggregate(rep);
    return rep;
}

void aggregate(BenchReport& rep) {
    rep.aggregates.clear();
    rep.violations.clear();
    const Perturbation kinds[] = {Perturbation::LoadChange, Perturbation::CostChange};
    for (const auto& s : rep.strategies) {
        for (auto kind : kinds) {
            for (int n : rep.options.record_at) rep.aggregates.push_back({s, kind, n, summarize(rep.deltas(s, kind, n))});
        }
        for (const std::string scope : {"all", "load_change", "cost_change"}) {
            for (std::size_t k = 0; k < rep.options.violation_at.size(); ++k) {
                std::vector<double> v;
                for (const auto& c : rep.cells) {
                    if (c.strategy != s || !c.ok) continue;
                    if (scope != "all" && to_string(c.kind) != scope) continue;
                    v.push_back(c.violation[k]);
                }
                rep.violations.push_back({s, scope, rep.options.violation_at[k], violation_stats(v)});
            }
        }
    }
}

void write_cells_csv(std::ostream& os, const BenchReport& r, const Provenance& prov) {
    write_provenance(os, prov);
    os << "scenario,kind,strategy,ok,iterations,sim_calls,sdo_iterations,fell_back";
    for (int n : r.options.record_at) os << ",J_pen_n" << n;
    for (int n : r.options.record_at) os << ",dJ_rel_n" << n;
    for (int n : r.options.violation_at) os << ",h_n" << n;
    os << '\n';
    for (const auto& c : r.cells) {
        os << c.scenario << ',' << to_string(c.kind) << ',' << c.strategy << ',' << (c.ok ? 1 : 0) << ','
           << c.iterations << ',' << c.sim_calls << ',' << c.sdo_iterations << ',' << (c.fell_back ? 1 : 0);
        for (double v : c.J_pen) os << ',' << fmt_or_empty(v);
        for (double v : c.delta) os << ',' << fmt_or_empty(v);
        for (double v : c.violation) os << ',' << fmt_or_empty(v);
        os << '\n';
    }
}

void write_gain_table_csv(std::ostream& os, const BenchReport& r, const Provenance& prov) {
    write_provenance(os, prov);
    const Perturbation kinds[] = {Perturbation::LoadChange, Perturbation::CostChange};
    os << "statistic,method";
    for (auto kind : kinds) {
        for (int n : r.options.record_at) os << ',' << to_string(kind) << "_n" << n;
    }
    os << '\n';
    const char* stats[] = {"worst", "q25", "median", "q75", "count"};
    for (const char* stat : stats) {
        for (const auto& s : r.strategies) {
            os << stat << ',' << s;
            for (auto kind : kinds) {
                for (int n : r.options.record_at) {
                    const auto* a = r.aggregate(s, kind, n);
                    const auto& q = a->summary;
                    const std::string st = stat;
                    if (st == "count") {
                        os << ',' << q.count;
                    } else {
                        const double v = st == "worst" ? q.worst : st == "q25" ? q.q25 : st == "median" ? q.median : q.q75;
                        os << ',' << fmt_or_empty(v);
                    }
                }
            }
            os << '\n';
        }
    }
}

void write_violation_table_csv(std::ostream& os, const BenchReport& r, const Provenance& prov) {
    write_provenance(os, prov);
    os << "method,scope";
    for (int n : r.options.violation_at) os << ",E_n" << n << ",P_n" << n;
    os << ",count\n";
    for (const auto& s : r.strategies) {
        for (const std::string scope : {"all", "load_change", "cost_change"}) {
            os << s << ',' << scope;
            std::size_t count = 0;
            for (int n : r.options.violation_at) {
                const auto* v = r.violation(s, scope, n);
                os << ',' << fmt_double(v->stats.expected) << ',' << fmt_double(v->stats.probability);
                count = v->stats.count;
            }
            os << ',' << count << '\n';
        }
    }
}

void write_timing_csv(std::ostream& os, const BenchReport& r, const Provenance& prov) {
    write_provenance(os, prov);
    os << "scenario,strategy,init_seconds,refine_seconds\n";
    for (const auto& c : r.cells) {
        os << c.scenario << ',' << c.strategy << ',' << c.init_seconds << ',' << c.refine_seconds << '\n';
    }
}

void SweepOptions::validate() const {
    std::vector<std::string> bad;
    if (fractions.empty()) bad.emplace_back("at least one fraction required");
    for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) bad.push_back("fraction " + fmt_double(f) + " outside (0, 1]");
    }
    if (checkpoint_every < 1) bad.emplace_back("checkpoint_every must be >= 1");
    if (n_eval < 0) bad.emplace_back("n_eval must be >= 0");
    if (!bad.empty()) {
        std::ostringstream os;
        os << "invalid sweep options:";
        for (const auto& b : bad) os << " [" << b << "]";
        throw ConfigError(os.str());
    }
    surrogate.validate();
}

const SweepPoint* SweepReport::final_point(double fraction) const {
    for (const auto& p : points) {
        if (p.final && p.fraction == fraction) return &p;
    }
    return nullptr;
}

SweepReport data_efficiency_sweep(const PwrModel& model, const std::vector<TrajectoryData>& dataset,
                                  const std::vector<Scenario>& suite, const SweepOptions& opt) {
    opt.validate();
    if (suite.empty()) throw std::invalid_argument("sweep needs at least one scenario");
    SweepReport rep;

    std::vector<double> cold_J(suite.size());
    for (std::size_t i = 0; i < suite.size(); ++i) {
        cold_J[i] = refine_full(model, suite[i], cold_start(suite[i].spec), opt.n_eval, opt.refine)
                        .trace.at(opt.n_eval)
                        .best_J_pen;
    }
    auto evaluate = [&](const SurrogateNet& net) {
        std::vector<double> gains;
        SdoOptions so = opt.sdo;
        for (std::size_t i = 0; i < suite.size(); ++i) {
            if (!(cold_J[i] > 0.0)) continue;
            const auto ws = sdo_warmstart(net, suite[i], so);
            const auto r = refine_full(model, suite[i], ws.u, opt.n_eval, opt.refine);
            gains.push_back(delta_j_rel(cold_J[i], r.trace.at(opt.n_eval).best_J_pen));
        }
        return summarize(gains);
    };

    const auto phys = PhysicsConsts::from(model.params(), suite.front().spec.dt);
    for (double f : opt.fractions) {
        const auto n = std::max<std::size_t>(
            2, static_cast<std::size_t>(std::lround(f * static_cast<double>(dataset.size()))));
        if (n > dataset.size()) throw std::invalid_argument("dataset too small for the sweep");
        const std::vector<TrajectoryData> subset(dataset.begin(), dataset.begin() + static_cast<std::ptrdiff_t>(n));

        SurrogateNet best;
        double best_val = std::numeric_limits<double>::infinity();
        int best_epoch = 0;
        std::vector<double> mse_trace, gain_trace;
        auto hook = [&](const TrainEpoch& e, const SurrogateNet& current) {
            if (e.val_mse_L < best_val) {
                best_val = e.val_mse_L;
                best_epoch = e.epoch;
                best = current;
            }
            if (e.epoch % opt.checkpoint_every != 0) return;
            SweepPoint p{f, e.epoch, best_epoch, false, best_val, evaluate(best)};
            mse_trace.push_back(p.val_mse);
            gain_trace.push_back(p.gain.median);
            rep.points.push_back(p);
        };
        try {
            const auto res = train_surrogate(subset, opt.surrogate, phys, hook);
            const int last = res.record.epochs.back().epoch;
            if (last % opt.checkpoint_every == 0) {
                rep.points.back().final = true;
            } else {
                SweepPoint p{f, last, res.record.best_epoch, true, best_val, evaluate(res.net)};
                mse_trace.push_back(p.val_mse);
                gain_trace.push_back(p.gain.median);
                rep.points.push_back(p);
            }
        } catch (const std::exception& e) {
            rep.log.push_back("fraction " + fmt_double(f) + ": " + e.what());
        }
        rep.spearman.emplace_back(f, spearman(mse_trace, gain_trace));
    }
    return rep;
}

void write_sweep_csv(std::ostream& os, const SweepReport& r, const Provenance& prov) {
    write_provenance(os, prov);
    os << "fraction,epoch,best_epoch,final,val_mse,gain_worst,gain_q25,gain_median,gain_q75,count\n";
    for (const auto& p : r.points) {
        os << fmt_double(p.fraction) << ',' << p.epoch << ',' << p.best_epoch << ',' << (p.final ? 1 : 0) << ','
           << fmt_double(p.val_mse) << ',' << fmt_or_empty(p.gain.worst) << ',' << fmt_or_empty(p.gain.q25) << ','
           << fmt_or_empty(p.gain.median) << ',' << fmt_or_empty(p.gain.q75) << ',' << p.gain.count << '\n';
    }
    os << "# spearman";
    for (const auto& [f, rho] : r.spearman) os << ' ' << fmt_double(f) << '=' << fmt_or_empty(rho);
    os << '\n';
}

}  // namespace sdo
