#include "ctnreg/error.hpp"
#include "ctnreg/regularizers.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace ctnreg;

namespace {

// Reference values computed once with numpy.linalg.svd.
const Matrix kX{{1.0, 0.0, 2.0}, {0.0, 1.0, 1.0}};
const Matrix kW{{0.5, -1.0, 0.25}, {1.0, 0.0, -0.5}};
const Matrix kXi{{0.3, -0.2}, {0.1, 0.4}};

}  // namespace

TEST_CASE("regularizer kind names round-trip") {
  for (auto kind : {RegularizerKind::kNone, RegularizerKind::kL1, RegularizerKind::kL2,
                    RegularizerKind::kTikhonov, RegularizerKind::kCoupled}) {
    CHECK(parse_regularizer_kind(to_string(kind)) == kind);
  }
  CHECK_FALSE(parse_regularizer_kind("ridge").has_value());
  RegularizerSpec bad{RegularizerKind::kL1, -1.0};
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(RegularizerSpec{RegularizerKind::kNone, 3.0}.effective_lambda() == 0.0);
}

TEST_CASE("coupled regularizer frozen values") {
  const ValueAndGrad r = coupled_reg_mlr(kX, kW);
  CHECK(r.value == doctest::Approx(4.079060911686569).epsilon(1e-12));
  const Matrix expected{{0.480089630897472, -0.5440997689299523, 0.41607949286499174},
                        {0.03915586079932942, -0.31052536488752897, -0.2322136432888701}};
  CHECK((r.grad - expected).cwiseAbs().maxCoeff() <= 1e-10);

  const CoupledMlrRegularizer fast(kX);
  const ValueAndGrad f = fast.value_and_grad(kW);
  CHECK(f.value == doctest::Approx(4.079060911686569).epsilon(1e-12));
  CHECK((f.grad - expected).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("concatenation subgradient frozen values") {
  const ConcatSubgradient g = concat_value_and_subgrad(kX, kXi);
  CHECK(g.value == doctest::Approx(3.565760340079752).epsilon(1e-12));
  const Matrix expected{{0.1313694679539621, -0.18184434858770587},
                        {0.02058620338115098, 0.3651389233797974}};
  CHECK((g.subgrad - expected).cwiseAbs().maxCoeff() <= 1e-10);

  const ConcatNuclearNorm fast(kX);
  const ConcatSubgradient h = fast.value_and_subgrad(kXi);
  CHECK(h.value == doctest::Approx(3.565760340079752).epsilon(1e-12));
  CHECK((h.subgrad - expected).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("coupled regularizer gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix x = oracle::gaussian(8, 5, 10 * seed);
    const Matrix w = oracle::gaussian(3, 5, 10 * seed + 1);
    const Matrix grad = coupled_reg_mlr(x, w).grad;
    const Matrix fd = oracle::central_diff(
        [&](const Matrix& v) { return oracle::nuclear_norm(hconcat(x, x * v.transpose())); }, w);
    CHECK((grad - fd).cwiseAbs().maxCoeff() <= 1e-5);
  }
}

TEST_CASE("fast and reference routes agree") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Index n = 6 + static_cast<Index>(seed);
    const Matrix x = oracle::gaussian(n, 12, 300 + seed);
    const Matrix w = oracle::gaussian(4, 12, 400 + seed, 0.5);
    const ValueAndGrad ref = coupled_reg_mlr(x, w);
    const ValueAndGrad fast = CoupledMlrRegularizer(x).value_and_grad(w);
    CHECK(fast.value == doctest::Approx(ref.value).epsilon(1e-11));
    CHECK((fast.grad - ref.grad).norm() <= 1e-9 * std::max(1.0, ref.grad.norm()));

    const Matrix xi = oracle::gaussian(n, 4, 500 + seed);
    const ConcatSubgradient a = concat_value_and_subgrad(x, xi);
    const ConcatSubgradient b = ConcatNuclearNorm(x).value_and_subgrad(xi);
    CHECK(b.value == doctest::Approx(a.value).epsilon(1e-11));
    CHECK((b.subgrad - a.subgrad).norm() <= 1e-8);
  }
}

TEST_CASE("coupled regularizer at W = 0 equals ||X||_*") {
  const Matrix x = oracle::gaussian(7, 4, 21);
  CHECK(coupled_reg_mlr(x, Matrix::Zero(3, 4)).value == doctest::Approx(oracle::nuclear_norm(x)).epsilon(1e-12));
  CHECK(CoupledMlrRegularizer(x).value(Matrix::Zero(3, 4)) ==
        doctest::Approx(oracle::nuclear_norm(x)).epsilon(1e-12));
}

TEST_CASE("subgradient inequality for g") {
  const Matrix x = oracle::gaussian(6, 4, 31);
  const ConcatNuclearNorm g(x);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Matrix a = oracle::gaussian(6, 3, 600 + seed);
    const Matrix b = oracle::gaussian(6, 3, 700 + seed);
    const ConcatSubgradient ga = g.value_and_subgrad(a);
    const double slack = g.value(b) - ga.value - (ga.subgrad.array() * (b - a).array()).sum();
    CHECK(slack >= -1e-9);
  }
}

TEST_CASE("shape mismatches are rejected") {
  CHECK_THROWS_AS(coupled_reg_mlr(kX, Matrix::Zero(2, 4)), Error);
  CHECK_THROWS_AS(concat_value_and_subgrad(kX, Matrix::Zero(3, 2)), Error);
  CHECK_THROWS_AS((void)CoupledMlrRegularizer(kX).value(Matrix::Zero(2, 2)), Error);
}

TEST_CASE("baseline regularizers") {
  const Matrix w{{1.0, -2.0}, {0.0, 2.0}};
  const ValueAndGrad l1 = baseline_reg(w, {RegularizerKind::kL1, 1.0});
  CHECK(l1.value == doctest::Approx(5.0));
  CHECK(l1.grad == Matrix{{1.0, -1.0}, {0.0, 1.0}});

  const ValueAndGrad l2 = baseline_reg(w, {RegularizerKind::kL2, 1.0});
  CHECK(l2.value == doctest::Approx(3.0));
  CHECK(l2.grad.isApprox(w / 3.0));
  CHECK(baseline_reg(Matrix::Zero(2, 2), {RegularizerKind::kL2, 1.0}).grad.isZero());

  const ValueAndGrad tk = baseline_reg(w, {RegularizerKind::kTikhonov, 1.0});
  CHECK(tk.value == doctest::Approx(4.5));
  CHECK(tk.grad == w);

  const ValueAndGrad none = baseline_reg(w, {RegularizerKind::kNone, 1.0});
  CHECK(none.value == 0.0);
  CHECK(none.grad.isZero());

  const Matrix v = oracle::gaussian(3, 4, 41);
  for (auto kind : {RegularizerKind::kL2, RegularizerKind::kTikhonov}) {
    const Matrix fd = oracle::central_diff([&](const Matrix& u) { return baseline_reg(u, {kind, 1.0}).value; }, v);
    CHECK((baseline_reg(v, {kind, 1.0}).grad - fd).cwiseAbs().maxCoeff() <= 1e-7);
  }
}

TEST_CASE("Lipschitz diagnostic is finite") {
  const Matrix x = oracle::gaussian(8, 5, 51);
  const LipschitzEstimate est = estimate_lipschitz(x, oracle::gaussian(3, 5, 52), oracle::gaussian(3, 5, 53));
  CHECK(std::isfinite(est.bound));
  CHECK(est.bound > 0.0);
  CHECK(est.observed >= 0.0);
  CHECK_THROWS_AS(estimate_lipschitz(x, Matrix::Zero(3, 5), Matrix::Zero(3, 5)), Error);
}
