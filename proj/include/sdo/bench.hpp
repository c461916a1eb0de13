#pragma once

// Strategy comparison on a scenario suite: relative gains over the cold start,
// constraint-violation statistics and the data-efficiency sweep.

#include "sdo/warmstart.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace sdo {

/// (J_cold - J_strat) / J_cold. Requires J_cold > 0.
double delta_j_rel(double J_cold, double J_strat);

struct ViolationStats {
    double expected = 0.0;     // mean of the norms
    double probability = 0.0;  // fraction strictly positive
    std::size_t count = 0;
};

ViolationStats violation_stats(const std::vector<double>& norms);

/// Sample quantile with linear interpolation between order statistics
/// (x[floor(h)] + frac(h) * (x[floor(h)+1] - x[floor(h)]), h = (n-1) p).
double quantile(std::vector<double> values, double p);

struct QuantileSummary {
    double worst = 0.0;
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
    std::size_t count = 0;
};

QuantileSummary summarize(const std::vector<double>& values);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

enum class StrategyKind { Cold, Shift, Bc, Sdo };

struct Strategy {
    std::string name;
    StrategyKind kind = StrategyKind::Cold;
    double fraction = 0.0;  // surrogate budget for Sdo

    /// "cold", "shift", "bc", or "sdo_<percent>" (e.g. sdo_5).
    static Strategy parse(const std::string& name);
};

std::vector<Strategy> default_strategies();

struct BenchOptions {
    int iterations = 20;
    std::vector<int> record_at{5, 10, 15, 20};
    std::vector<int> violation_at{0, 5, 10};
    double violation_scale = 1e4;
    RefineOptions refine;
    SdoOptions sdo;  // fraction is taken from each strategy
    int parallelism = 1;

    void validate() const;
};

struct BenchArtifacts {
    const PwrModel* model = nullptr;
    const SurrogateNet* surrogate = nullptr;
    const BcNet* bc = nullptr;
};

struct CellResult {
    int scenario = 0;
    Perturbation kind = Perturbation::LoadChange;
    std::string strategy;
    bool ok = false;
    std::string error;
    std::vector<double> J_pen;      // best-so-far penalized cost at record_at
    std::vector<double> delta;      // relative gain at record_at (NaN if dropped)
    std::vector<double> violation;  // scaled horizon-sum violation at violation_at
    int iterations = 0;
    std::uint64_t sim_calls = 0;
    int sdo_iterations = 0;
    bool fell_back = false;
    double init_seconds = 0.0;
    double refine_seconds = 0.0;
};

struct AggregateRow {
    std::string strategy;
    Perturbation kind = Perturbation::LoadChange;
    int n = 0;
    QuantileSummary summary;
};

struct ViolationRow {
    std::string strategy;
    std::string scope;  // "all" or a perturbation name
    int n = 0;
    ViolationStats stats;
};

struct BenchReport {
    BenchOptions options;
    std::vector<std::string> strategies;
    std::vector<CellResult> cells;  // scenario-major, strategy-minor
    std::vector<AggregateRow> aggregates;
    std::vector<ViolationRow> violations;
    std::vector<std::string> log;

    /// Relative gains of completed, non-dropped cells at record_at[i].
    std::vector<double> deltas(const std::string& strategy, Perturbation kind, int n) const;
    const AggregateRow* aggregate(const std::string& strategy, Perturbation kind, int n) const;
    const ViolationRow* violation(const std::string& strategy, const std::string& scope, int n) const;
};

/// Runs the cold baseline and every strategy on every scenario with the same
/// number of full-scale iterations, then aggregates.
BenchReport run_benchmark(const std::vector<Scenario>& suite, const std::vector<Strategy>& strategies,
                          const BenchArtifacts& art, const BenchOptions& opt);

/// Recomputes aggregates and violation rows from report.cells.
void aggregate(BenchReport& report);

using Provenance = std::vector<std::pair<std::string, std::string>>;

void write_cells_csv(std::ostream& os, const BenchReport& r, const Provenance& prov);
/// Rows: statistic x method; columns: perturbation x n.
void write_gain_table_csv(std::ostream& os, const BenchReport& r, const Provenance& prov);
/// Rows: method x scope; columns: E and P at each violation_at.
void write_violation_table_csv(std::ostream& os, const BenchReport& r, const Provenance& prov);
void write_timing_csv(std::ostream& os, const BenchReport& r, const Provenance& prov);

struct SweepOptions {
    std::vector<double> fractions{0.1, 0.3, 1.0};
    int checkpoint_every = 20;  // epochs between checkpoint evaluations
    int n_eval = 5;             // full-scale iterations behind the gain
    SurrogateConfig surrogate;
    SdoOptions sdo;
    RefineOptions refine;

    void validate() const;
};

struct SweepPoint {
    double fraction = 0.0;
    int epoch = 0;       // checkpoint epoch
    int best_epoch = 0;  // epoch of the evaluated best-so-far snapshot
    bool final = false;
    double val_mse = 0.0;
    QuantileSummary gain;
};

struct SweepReport {
    std::vector<SweepPoint> points;
    std::vector<std::pair<double, double>> spearman;  // (fraction, rho(val_mse, median gain))
    std::vector<std::string> log;

    const SweepPoint* final_point(double fraction) const;
};

/// Trains one surrogate per dataset fraction (prefix of `dataset`, identical
/// config and seed) and evaluates the median relative gain of sdo after
/// n_eval iterations at each checkpoint, using the best snapshot so far.
SweepReport data_efficiency_sweep(const PwrModel& model, const std::vector<TrajectoryData>& dataset,
                                  const std::vector<Scenario>& suite, const SweepOptions& opt);

void write_sweep_csv(std::ostream& os, const SweepReport& r, const Provenance& prov);

}  // namespace sdo
