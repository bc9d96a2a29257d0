#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mbrbf/errors.hpp"
#include "mbrbf/optim.hpp"
#include "test_util.hpp"

using namespace mbrbf;

namespace {

struct Fixture {
  Tensor theta;
  std::vector<ParamRef> params;
  explicit Fixture(const std::vector<double>& values) : theta({values.size()}, values) {
    params = {{"theta", &theta}};
  }
};

GradientSet grads_of(const std::vector<double>& g) {
  GradientSet gs;
  gs.add("theta", Tensor({g.size()}, g));
  return gs;
}

// Textbook Adam for one scalar, written independently of the library.
double adam_reference(double theta, const std::vector<double>& gs, double lr) {
  double m = 0.0, v = 0.0;
  for (std::size_t t = 1; t <= gs.size(); ++t) {
    const double g = gs[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
    const double vh = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
    theta -= lr * mh / (std::sqrt(vh) + 1e-8);
  }
  return theta;
}

}  // namespace

TEST(Adam, FirstStepWithHalfGradient) {
  Fixture f({0.0});
  AdamState st;
  adam_step(f.params, grads_of({0.5}), st);
  EXPECT_NEAR(f.theta[0], -9.99999980e-4, 1e-12);
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, FirstStepMagnitudeIsAboutLr) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const double g = rng.uniform(-10, 10);
    Fixture f({1.0});
    AdamState st;
    adam_step(f.params, grads_of({g}), st);
    const double delta = f.theta[0] - 1.0;
    EXPECT_NEAR(std::abs(delta), 1e-3 * std::abs(g) / (std::abs(g) + 1e-8), 1e-15);
    EXPECT_LT(delta * g, 0.0);
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Fixture f({0.3, -0.7});
  AdamState st;
  adam_step(f.params, grads_of({0.0, 0.0}), st);
  EXPECT_EQ(f.theta[0], 0.3);
  EXPECT_EQ(f.theta[1], -0.7);
}

TEST(Adam, MatchesReferenceOverManySteps) {
  Rng rng(2);
  std::vector<double> gs;
  for (int i = 0; i < 200; ++i) gs.push_back(rng.uniform(-1, 1));
  Fixture f({0.5});
  AdamState st;
  st.hyper.lr = 0.01;
  for (double g : gs) adam_step(f.params, grads_of({g}), st);
  EXPECT_NEAR(f.theta[0], adam_reference(0.5, gs, 0.01), 1e-12);
}

TEST(Adam, StepNeverExceedsBound) {
  // |m_hat / sqrt(v_hat)| stays within (1 - b1) / sqrt(1 - b2) ~ 3.16.
  Rng rng(3);
  Fixture f({0.0});
  AdamState st;
  for (int i = 0; i < 500; ++i) {
    const double before = f.theta[0];
    const double g = (i % 50 == 0) ? 1e6 : rng.uniform(-1e-3, 1e-3);
    adam_step(f.params, grads_of({g}), st);
    EXPECT_LE(std::abs(f.theta[0] - before), 10.0 * st.hyper.lr);
  }
}

TEST(Adam, NonFiniteGradientIsDivergenceAndTouchesNothing) {
  Fixture f({1.0, 2.0});
  AdamState st;
  adam_step(f.params, grads_of({0.1, 0.1}), st);
  const Tensor saved = f.theta;
  const auto m_saved = st.m[0].tensor;
  EXPECT_THROW(adam_step(f.params, grads_of({0.1, std::numeric_limits<double>::quiet_NaN()}), st),
               DivergenceError);
  EXPECT_THROW(adam_step(f.params, grads_of({std::numeric_limits<double>::infinity(), 0.0}), st),
               DivergenceError);
  EXPECT_TRUE(f.theta.bit_equal(saved));
  EXPECT_TRUE(st.m[0].tensor.bit_equal(m_saved));
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, MisalignedGradientsAreRejected) {
  Fixture f({1.0, 2.0});
  AdamState st;
  EXPECT_THROW(adam_step(f.params, grads_of({1.0}), st), Error);
  GradientSet wrong;
  wrong.add("other", Tensor({2}));
  EXPECT_THROW(adam_step(f.params, wrong, st), Error);
}

TEST(Sgd, Examples) {
  Fixture f({1.0});
  sgd_step(f.params, grads_of({2.0}), 0.1);
  EXPECT_DOUBLE_EQ(f.theta[0], 0.8);

  Fixture g({1.5});
  sgd_step(g.params, grads_of({2.0}), 0.0);
  EXPECT_EQ(g.theta[0], 1.5);

  Fixture h({1.0});
  sgd_step(h.params, grads_of({0.5}), 0.2);
  sgd_step(h.params, grads_of({0.5}), 0.3);
  EXPECT_NEAR(h.theta[0], 1.0 - (0.2 + 0.3) * 0.5, 1e-15);

  EXPECT_THROW(sgd_step(h.params, grads_of({std::nan("")}), 0.1), DivergenceError);
}
