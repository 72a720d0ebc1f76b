#include <gtest/gtest.h>

#include <functional>

#include "vadet/autograd.hpp"

using namespace vadet;
using M = Matrix<double>;
using V = ag::Var<double>;
using Fn = std::function<V(ag::Tape<double>&, const std::vector<V>&)>;

namespace {

M randm(Eigen::Index r, Eigen::Index c, Rng& rng, double s = 1.0) {
  M m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * s;
  return m;
}

/// Projects f's output onto a fixed random direction and compares taped
/// gradients with central differences for every input entry.
double max_grad_error(const Fn& f, std::vector<M> inputs, std::uint64_t seed = 1) {
  Rng rng(seed);
  M dir;
  auto scalar = [&](ag::Tape<double>& tape, const std::vector<V>& vs) {
    V out = f(tape, vs);
    if (dir.size() == 0) dir = randm(out.rows(), out.cols(), rng);
    return ag::sum(ag::mul(out, tape.constant(dir)));
  };
  ag::Tape<double> tape;
  std::vector<V> vs;
  for (const auto& m : inputs) vs.push_back(tape.variable(m));
  tape.backward(scalar(tape, vs));
  double worst = 0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const M analytic = tape.has_grad(vs[k].id) ? tape.grad(vs[k].id) : M::Zero(inputs[k].rows(), inputs[k].cols());
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        auto xs = inputs;
        xs[k].data()[i] += delta;
        ag::Tape<double> t2;
        std::vector<V> v2;
        for (const auto& m : xs) v2.push_back(t2.constant(m));
        return scalar(t2, v2).scalar();
      };
      const double fd = (eval(h) - eval(-h)) / (2 * h);
      const double a = analytic.data()[i];
      worst = std::max(worst, std::abs(a - fd) / std::max(1e-6, std::abs(a) + std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace

TEST(Autograd, Elementwise) {
  Rng rng(1);
  auto a = randm(3, 4, rng), b = randm(3, 4, rng);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::add(v[0], v[1]); }, {a, b}), 1e-6);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::sub(v[0], v[1]); }, {a, b}), 1e-6);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::mul(v[0], v[1]); }, {a, b}), 1e-6);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::scale(v[0], 2.5); }, {a}), 1e-6);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::tanh(v[0]); }, {a}), 1e-6);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::gelu(v[0]); }, {a}), 1e-6);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::clamp(v[0], -0.5, 0.5); }, {a}), 1e-6);
}

TEST(Autograd, Linear) {
  Rng rng(2);
  auto x = randm(5, 3, rng), w = randm(3, 4, rng), b = randm(1, 4, rng);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::matmul(v[0], v[1]); }, {x, w}), 1e-6);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::linear(v[0], v[1], v[2]); }, {x, w, b}), 1e-6);
}

TEST(Autograd, LayerNorm) {
  Rng rng(3);
  auto x = randm(4, 6, rng), g = randm(1, 6, rng), b = randm(1, 6, rng);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::layer_norm(v[0], v[1], v[2]); }, {x, g, b}), 1e-5);
}

TEST(Autograd, RowRouting) {
  Rng rng(4);
  auto a = randm(4, 3, rng), b = randm(2, 3, rng);
  EXPECT_LT(max_grad_error(
                [](auto&, const auto& v) {
                  return ag::gather_rows<double>({v[0], v[1]}, {{0, 1}, {1, 0}, {0, 1}, {1, 1}, {0, 3}});
                },
                {a, b}),
            1e-6);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::take_rows(v[0], {3, 0, 0}); }, {a}), 1e-6);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::column(v[0], 2); }, {a}), 1e-6);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::segment_mean(v[0], {{0, 1}, {1, 3}}); }, {a}), 1e-6);
}

TEST(Autograd, Attention) {
  Rng rng(5);
  auto q = randm(7, 4, rng), k = randm(7, 4, rng), v = randm(7, 4, rng);
  ag::AttentionLayout layout;
  layout.segments = {{0, 3}, {3, 4}};
  layout.blocked = {{}, {{0, 1}, {2, 3}}};
  EXPECT_LT(max_grad_error([&](auto&, const auto& x) { return ag::attention(x[0], x[1], x[2], layout, 2); }, {q, k, v}), 1e-5);
}

TEST(Autograd, AttentionStaysInsideSegmentsAndRespectsBlocks) {
  Rng rng(6);
  auto q = randm(5, 2, rng), k = randm(5, 2, rng), v = randm(5, 2, rng);
  ag::AttentionLayout layout;
  layout.segments = {{0, 2}, {2, 3}};
  layout.blocked = {{}, {{0, 2}}};
  ag::Tape<double> tape;
  auto qv = tape.variable(q), kv = tape.variable(k), vv = tape.variable(v);
  auto out = ag::attention(qv, kv, vv, layout, 1);
  // Row 2 (segment 1, local query 0) must ignore local key 2 (global row 4).
  tape.backward(ag::sum(ag::take_rows(out, {2})));
  EXPECT_TRUE(tape.grad(vv.id).row(4).isZero());
  EXPECT_TRUE(tape.grad(vv.id).topRows(2).isZero());
  EXPECT_FALSE(tape.grad(vv.id).row(3).isZero());
}

TEST(Autograd, Likelihoods) {
  Rng rng(7);
  auto logits = randm(4, 5, rng), scores = randm(6, 1, rng);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::cross_entropy(v[0], {1, -1, 4, 0}); }, {logits}), 1e-6);
  EXPECT_LT(max_grad_error([](auto&, const auto& v) { return ag::segment_nll(v[0], {{0, 2}, {2, 4}}, {1, 3}); }, {scores}), 1e-6);
}

TEST(Autograd, CrossEntropyValue) {
  ag::Tape<double> tape;
  M z(2, 3);
  z << 0, 0, 0, 1, 2, 3;
  auto ce = ag::cross_entropy(tape.constant(z), {0, -1});
  EXPECT_NEAR(ce.scalar(), std::log(3.0), 1e-12);
}

TEST(Autograd, DropoutIdentityAtZeroAndScaledOtherwise) {
  Rng rng(8);
  ag::Tape<double> tape;
  auto x = tape.variable(M::Ones(50, 40));
  EXPECT_EQ(ag::dropout(x, 0.0, rng).id, x.id);
  auto y = ag::dropout(x, 0.25, rng);
  const double mean = y.value().mean();
  EXPECT_NEAR(mean, 1.0, 0.05);
  for (Eigen::Index i = 0; i < y.value().size(); ++i) {
    const double e = y.value().data()[i];
    EXPECT_TRUE(e == 0.0 || std::abs(e - 1.0 / 0.75) < 1e-12);
  }
}

TEST(Autograd, ParametersAccumulateAndDetachBlocks) {
  Parameter<double> p{"w", M::Constant(2, 2, 0.5), {}};
  ag::Tape<double> tape;
  auto a = tape.param(p), b = tape.param_detached(p);
  tape.backward(ag::sum(ag::add(ag::mul(a, a), b)));
  EXPECT_TRUE(p.grad.isApprox(M::Ones(2, 2)));
  ag::Tape<double> t2;
  auto c = t2.param(p);
  t2.backward(ag::sum(c));
  EXPECT_TRUE(p.grad.isApprox(M::Constant(2, 2, 2.0)));
}

TEST(Autograd, NonScalarBackwardThrows) {
  ag::Tape<double> tape;
  auto x = tape.variable(M::Ones(2, 2));
  EXPECT_THROW(tape.backward(x), std::invalid_argument);
}
