#ifndef CTNREG_DATAIO_HPP
#define CTNREG_DATAIO_HPP

#include "ctnreg/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace ctnreg {

/// Design matrix with one-hot labels. class_names[k] is the label text of
/// class k; tensor_shape, when set, is the per-sample mode sizes whose product
/// equals the feature count.
struct Dataset {
  Matrix x;  // n x m
  Matrix y;  // n x c, one-hot rows
  std::vector<std::string> class_names;
  std::optional<std::vector<Index>> tensor_shape;

  [[nodiscard]] Index samples() const { return x.rows(); }
  [[nodiscard]] Index features() const { return x.cols(); }
  [[nodiscard]] Index classes() const { return y.cols(); }
  [[nodiscard]] std::vector<Index> labels() const;
  [[nodiscard]] Dataset subset(std::span<const Index> rows) const;
  void validate() const;
};

/// One-hot encoding of integer labels in [0, classes).
Matrix one_hot(std::span<const Index> labels, Index classes);

/// Zero-based column index (negative counts from the end) or a header name.
using LabelColumn = std::variant<Index, std::string>;

/// Reads a comma-separated file. Labels are mapped to classes in order of
/// first appearance; when `known_classes` is given that mapping is used as-is
/// and a label outside it is an error (a test file must not introduce new
/// classes).
Dataset load_csv(const std::filesystem::path& path, const LabelColumn& label_column,
                 bool has_header,
                 const std::vector<std::string>* known_classes = nullptr);

/// Writes features x0..x{m-1} and a trailing `label` column (class names)
/// with 17 significant digits, so load_csv reproduces x exactly.
void write_csv(const Dataset& data, const std::filesystem::path& path);

/// Feature export for external plotting: columns f0..f{c-1} plus an integer
/// `label` column.
void export_features(const Matrix& features, std::span<const Index> labels,
                     const std::filesystem::path& path);

struct Standardizer {
  Vector mean;
  Vector scale;

  [[nodiscard]] Matrix apply(const Matrix& x) const;
  [[nodiscard]] Dataset apply(const Dataset& d) const;
};

/// Per-feature centring and scaling to unit (population) standard deviation.
/// Zero-variance columns are only centred and get scale 1.
std::pair<Dataset, Standardizer> standardize(const Dataset& d);

struct SplitSpec {
  std::optional<double> train_fraction;
  std::vector<Index> train_indices;
  std::vector<Index> test_indices;
  std::uint64_t seed = 0;
};

/// Stratified fraction split (each class contributes round(fraction * count)
/// training samples, at least one on each side) or explicit index lists.
std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& spec);

struct SyntheticSpec {
  Index n_per_class = 100;
  Index classes = 4;
  Index features = 400;
  Index rank = 5;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
};

/// Samples from a mixture of low-dimensional Gaussians embedded in R^m:
/// class means mu_k ~ N(0, 0.3^2 I_R) in the latent space, per-sample latents
/// u_i = mu_k + 0.3 z_i, and rows x_i = B^T u_i + sigma e_i with one seeded
/// mixing matrix B (R x m, entries N(0, 1/R)). Neighbouring classes overlap
/// in the latent space, so a linear classifier on the R latent coordinates
/// is accurate but not perfect. Rows are grouped by class. With sigma = 0 the
/// design matrix has rank R.
Dataset gen_synthetic_lowrank(const SyntheticSpec& spec);

}  // namespace ctnreg

#endif  // CTNREG_DATAIO_HPP
