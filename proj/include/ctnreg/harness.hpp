#ifndef CTNREG_HARNESS_HPP
#define CTNREG_HARNESS_HPP

#include "ctnreg/dataio.hpp"
#include "ctnreg/dnn.hpp"
#include "ctnreg/linalg.hpp"
#include "ctnreg/regularizers.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctnreg {

enum class ModelKind { kMlr, kMlp };

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view name);

/// The lambda grid {1e-6, 1e-5, ..., 1}.
std::vector<double> default_lambda_grid();

struct RunConfig {
  ModelKind model = ModelKind::kMlr;
  RegularizerSpec reg;
  std::optional<double> mu;  // penalty weight, network model only

  // Data: both CSV paths, or neither for the synthetic generator.
  std::optional<std::filesystem::path> train_csv;
  std::optional<std::filesystem::path> test_csv;
  LabelColumn label_col = Index{-1};
  bool has_header = true;
  bool standardize = false;
  SyntheticSpec synth;           // n_per_class is the training count per class
  Index test_per_class = 200;

  // Linear model budgets.
  int max_iters = 2000;
  double step_tol = 1e-4;
  double grad_tol = 1e-4;

  // Network budgets.
  std::vector<Index> hidden = {256};
  int outer_iters = 25;
  int epochs_per_theta = 2;
  double learning_rate = 0.01;
  double momentum = 0.9;
  Index batch_size = 128;

  std::vector<double> lambda_grid = default_lambda_grid();
  std::vector<RegularizerKind> kinds = {RegularizerKind::kNone, RegularizerKind::kL1,
                                        RegularizerKind::kL2, RegularizerKind::kTikhonov,
                                        RegularizerKind::kCoupled};
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  int workers = 1;
  std::optional<std::filesystem::path> checkpoint;

  void validate() const;
};

/// Overwrites fields present in a flat JSON object; unknown keys are errors.
void apply_config_json(RunConfig& cfg, std::string_view json_text);
RunConfig load_config_file(const std::filesystem::path& path);

/// Train and test sets for the config. The synthetic route draws
/// n_per_class + test_per_class samples per class from one generator call and
/// assigns the first n_per_class of each class to training.
std::pair<Dataset, Dataset> load_run_data(const RunConfig& cfg);

struct FitSummary {
  RegularizerKind kind = RegularizerKind::kNone;
  double lambda = 0.0;
  bool ok = true;
  std::string error;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::string stop_reason;
  int iterations = 0;
  double final_objective = 0.0;
  std::vector<double> objective_trajectory;
};

/// Fitted model as a network; the linear model is the single layer W with a
/// zero bias, so logits are mlp_forward(model, x) in both cases.
struct FitOutcome {
  FitSummary summary;
  MlpParams model;
};

FitOutcome fit_and_evaluate(const RunConfig& cfg, const RegularizerSpec& reg, const Dataset& train,
                            const Dataset& test);

struct SweepTable {
  RegularizerKind kind = RegularizerKind::kNone;
  std::vector<FitSummary> rows;
  std::optional<std::size_t> best;
};

/// Index of the highest test accuracy among successful rows; ties go to the
/// smaller lambda.
std::optional<std::size_t> select_best(const std::vector<FitSummary>& rows);

/// One fit per grid point (a single lambda = 0 fit for kind none), run on up
/// to cfg.workers threads. Failed points are recorded and skipped by
/// select_best.
SweepTable run_sweep(const RunConfig& cfg, RegularizerKind kind, const Dataset& train,
                     const Dataset& test);

struct RunReport {
  std::string command;
  RunConfig config;
  Index train_samples = 0;
  Index test_samples = 0;
  Index features = 0;
  Index classes = 0;
  std::optional<FitSummary> fit;
  std::vector<SweepTable> sweeps;
  double wall_clock_seconds = 0.0;

  /// Pretty-printed JSON. The wall-clock field is omitted when
  /// include_wall_clock is false, which makes reports of identical runs
  /// byte-identical.
  [[nodiscard]] std::string to_json(bool include_wall_clock = true) const;
  /// Kind, train accuracy, test accuracy, best lambda; one line per sweep.
  [[nodiscard]] std::string comparison_table() const;
};

/// Fits one model; writes report.json, features.csv (test-set logits) and a
/// checkpoint directory under cfg.out_dir.
RunReport cmd_train(const RunConfig& cfg);
/// lambda sweep for cfg.reg.kind; writes report.json and sweep_table.csv.
RunReport cmd_sweep(const RunConfig& cfg);
/// One sweep per entry of cfg.kinds on the same data; writes report.json,
/// sweep_table.csv and compare_table.csv.
RunReport cmd_compare(const RunConfig& cfg);
/// Writes train.csv and test.csv from the synthetic generator.
void cmd_gen_synth(const RunConfig& cfg);
/// Logits of the test set under cfg.checkpoint (or a fresh fit when no
/// checkpoint is given) written to features.csv.
void cmd_export_features(const RunConfig& cfg);

}  // namespace ctnreg

#endif  // CTNREG_HARNESS_HPP
