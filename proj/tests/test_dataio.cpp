#include "ctnreg/dataio.hpp"
#include "ctnreg/error.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace ctnreg;

namespace {

std::filesystem::path scratch_file(const std::string& name, const std::string& contents) {
  const auto path = std::filesystem::temp_directory_path() / ("ctnreg_test_" + name);
  std::ofstream(path) << contents;
  return path;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Index rank_of(const Matrix& x) {
  Eigen::JacobiSVD<Matrix> svd(x);
  const Vector& s = svd.singularValues();
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i) r += s(i) > 1e-9 * s(0);
  return r;
}

}  // namespace

TEST_CASE("one-hot encoding") {
  const std::vector<Index> labels = {2, 0, 1, 2};
  const Matrix y = one_hot(labels, 3);
  CHECK(y == Matrix{{0, 0, 1}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  CHECK_THROWS_AS(one_hot(labels, 2), Error);
}

TEST_CASE("load_csv with a header and a named label column") {
  const auto path = scratch_file("named.csv", "a,b,cls\n1.5,-2,cat\n0,3e-1,dog\n\n4,5,cat\n");
  const Dataset d = load_csv(path, std::string("cls"), true);
  CHECK(d.samples() == 3);
  CHECK(d.features() == 2);
  CHECK(d.class_names == std::vector<std::string>{"cat", "dog"});
  CHECK(d.x == Matrix{{1.5, -2.0}, {0.0, 0.3}, {4.0, 5.0}});
  CHECK(d.labels() == std::vector<Index>{0, 1, 0});
}

TEST_CASE("load_csv with a leading label and no header") {
  const auto path = scratch_file("leading.csv", "3,1,2\n1,0,0\n3,4,4\n");
  const Dataset d = load_csv(path, Index{0}, false);
  CHECK(d.class_names == std::vector<std::string>{"3", "1"});
  CHECK(d.x == Matrix{{1, 2}, {0, 0}, {4, 4}});
  const Dataset last = load_csv(path, Index{-1}, false);
  CHECK(last.x == Matrix{{3, 1}, {1, 0}, {3, 4}});
}

TEST_CASE("load_csv reports malformed input") {
  const auto ragged = scratch_file("ragged.csv", "a,b,label\n1,2,x\n1,x\n");
  try {
    (void)load_csv(ragged, Index{-1}, true);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInvalidInput);
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  const auto text = scratch_file("text.csv", "1,abc,x\n");
  CHECK_THROWS_AS(load_csv(text, Index{-1}, false), Error);
  CHECK_THROWS_AS(load_csv(text, std::string("nope"), true), Error);
  try {
    (void)load_csv(std::filesystem::temp_directory_path() / "ctnreg_missing.csv", Index{-1}, true);
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIo);
  }
  const std::vector<std::string> known = {"a", "b"};
  const auto unseen = scratch_file("unseen.csv", "1,a\n2,c\n");
  CHECK_THROWS_AS(load_csv(unseen, Index{-1}, false, &known), Error);
  const auto seen = scratch_file("seen.csv", "1,b\n2,b\n");
  const Dataset d = load_csv(seen, Index{-1}, false, &known);
  CHECK(d.classes() == 2);
  CHECK(d.labels() == std::vector<Index>{1, 1});
}

TEST_CASE("CSV round-trip is exact") {
  SyntheticSpec spec;
  spec.n_per_class = 5;
  spec.classes = 3;
  spec.features = 7;
  spec.rank = 2;
  const Dataset d = gen_synthetic_lowrank(spec);
  const auto path = std::filesystem::temp_directory_path() / "ctnreg_test_roundtrip.csv";
  write_csv(d, path);
  const Dataset back = load_csv(path, std::string("label"), true);
  CHECK(back.x == d.x);
  CHECK(back.y == d.y);
  CHECK(back.class_names == d.class_names);
}

TEST_CASE("feature export") {
  const auto path = std::filesystem::temp_directory_path() / "ctnreg_test_features.csv";
  const std::vector<Index> labels = {1, 0};
  export_features(Matrix{{0.5, -1.0}, {2.0, 0.25}}, labels, path);
  CHECK(read_all(path) == "f0,f1,label\n0.5,-1,1\n2,0.25,0\n");
  export_features(Matrix(0, 0), std::vector<Index>{}, path);
  CHECK(read_all(path) == "label\n");
  CHECK_THROWS_AS(export_features(Matrix::Zero(2, 2), std::vector<Index>{0}, path), Error);
}

TEST_CASE("standardize uses training statistics") {
  Dataset d;
  d.x = Matrix{{1.0, 5.0}, {3.0, 5.0}, {5.0, 5.0}};
  d.y = one_hot(std::vector<Index>{0, 1, 0}, 2);
  d.class_names = {"a", "b"};
  const auto [z, st] = standardize(d);
  CHECK(st.mean == Vector{{3.0, 5.0}});
  CHECK(st.scale(0) == doctest::Approx(std::sqrt(8.0 / 3.0)));
  CHECK(st.scale(1) == 1.0);
  CHECK(z.x.col(0).mean() == doctest::Approx(0.0));
  CHECK(z.x.col(0).squaredNorm() / 3.0 == doctest::Approx(1.0));
  CHECK(z.x.col(1).isZero());
  CHECK(st.apply(Matrix{{3.0, 6.0}}) == Matrix{{0.0, 1.0}});
}

TEST_CASE("stratified split") {
  SyntheticSpec spec;
  spec.n_per_class = 10;
  spec.classes = 3;
  spec.features = 6;
  spec.rank = 2;
  const Dataset d = gen_synthetic_lowrank(spec);
  SplitSpec s;
  s.train_fraction = 0.7;
  s.seed = 4;
  const auto [train, test] = split(d, s);
  CHECK(train.samples() == 21);
  CHECK(test.samples() == 9);
  for (Index k = 0; k < 3; ++k) {
    CHECK(train.y.col(k).sum() == 7.0);
    CHECK(test.y.col(k).sum() == 3.0);
  }
  std::set<std::vector<double>> rows;
  for (const Dataset* part : {&train, &test}) {
    for (Index i = 0; i < part->samples(); ++i) {
      rows.insert(std::vector<double>(part->x.row(i).begin(), part->x.row(i).end()));
    }
  }
  CHECK(rows.size() == 30);
  const auto [train2, test2] = split(d, s);
  CHECK(train2.x == train.x);
  s.seed = 5;
  CHECK_FALSE(split(d, s).first.x == train.x);
  s.train_fraction = 0.01;  // still one training sample per class
  CHECK(split(d, s).first.samples() == 3);
  s.train_fraction = 1.0;
  CHECK_THROWS_AS(split(d, s), Error);
}

TEST_CASE("explicit index split") {
  SyntheticSpec spec;
  spec.n_per_class = 3;
  spec.classes = 2;
  spec.features = 4;
  spec.rank = 1;
  const Dataset d = gen_synthetic_lowrank(spec);
  SplitSpec s;
  s.train_indices = {0, 3, 4};
  s.test_indices = {1, 5};
  const auto [train, test] = split(d, s);
  CHECK(train.x.row(1) == d.x.row(3));
  CHECK(test.x.row(1) == d.x.row(5));
  s.test_indices = {1, 3};
  CHECK_THROWS_AS(split(d, s), Error);
}

TEST_CASE("synthetic generator shape, rank and determinism") {
  SyntheticSpec spec;
  spec.n_per_class = 20;
  spec.classes = 4;
  spec.features = 30;
  spec.rank = 5;
  spec.seed = 9;
  const Dataset d = gen_synthetic_lowrank(spec);
  CHECK(d.samples() == 80);
  CHECK(d.features() == 30);
  CHECK(d.classes() == 4);
  CHECK(d.y.col(2).sum() == 20.0);
  CHECK(d.labels()[20] == 1);
  CHECK(rank_of(d.x) == 30);  // noise makes it full rank

  spec.noise_sigma = 0.0;
  CHECK(rank_of(gen_synthetic_lowrank(spec).x) == 5);

  spec.noise_sigma = 0.1;
  CHECK(gen_synthetic_lowrank(spec).x == d.x);
  spec.seed = 10;
  CHECK_FALSE(gen_synthetic_lowrank(spec).x == d.x);
  spec.rank = 30;
  CHECK_THROWS_AS(gen_synthetic_lowrank(spec), Error);
}

TEST_CASE("dataset validation") {
  Dataset d;
  d.x = Matrix::Zero(2, 4);
  d.y = one_hot(std::vector<Index>{0, 1}, 2);
  d.class_names = {"a", "b"};
  d.tensor_shape = std::vector<Index>{2, 2};
  CHECK_NOTHROW(d.validate());
  d.tensor_shape = std::vector<Index>{3, 2};
  CHECK_THROWS_AS(d.validate(), Error);
  d.tensor_shape.reset();
  d.y(0, 1) = 1.0;
  CHECK_THROWS_AS(d.validate(), Error);
  const std::vector<Index> rows = {1};
  d.y(0, 1) = 0.0;
  CHECK(d.subset(rows).x.rows() == 1);
}
