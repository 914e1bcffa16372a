#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "wavesynth/nn.hpp"
#include "wavesynth/random.hpp"

using namespace wavesynth;
using namespace wavesynth::nn;

namespace {

Mlp random_net(Rng& rng, std::uint64_t seed) {
  std::uniform_int_distribution<int> depth_d(1, 4), width_d(1, 16), act_d(0, 3);
  const int depth = depth_d(rng);
  std::vector<std::size_t> dims{static_cast<std::size_t>(width_d(rng))};
  std::vector<Activation> acts;
  for (int i = 0; i < depth; ++i) {
    dims.push_back(static_cast<std::size_t>(width_d(rng)));
    Activation a = static_cast<Activation>(act_d(rng));
    if (a == Activation::Softmax && i + 1 != depth) a = Activation::Tanh;
    acts.push_back(a);
  }
  Mlp net(dims, acts, seed);
  // Nonzero biases so the check also covers them.
  auto p = net.parameters();
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& v : p) v += n(rng);
  net.set_parameters(p);
  return net;
}

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = n(rng);
  return m;
}

// Scalar loss L = sum(weights .* output).
double loss(const Mlp& net, const Matrix& x, const Matrix& w) { return net.forward(x).cwiseProduct(w).sum(); }

std::vector<double> flatten(const Gradients& g) {
  std::vector<double> out;
  for (std::size_t k = 0; k < g.weights.size(); ++k) {
    for (Eigen::Index r = 0; r < g.weights[k].rows(); ++r)
      for (Eigen::Index c = 0; c < g.weights[k].cols(); ++c) out.push_back(g.weights[k](r, c));
    for (Eigen::Index r = 0; r < g.biases[k].size(); ++r) out.push_back(g.biases[k](r));
  }
  return out;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-7); }

}  // namespace

TEST_CASE("forward examples") {
  SUBCASE("zero linear layer") {
    Layer l{Matrix::Zero(3, 2), Vector::Zero(3), Activation::Linear};
    Mlp net({l});
    CHECK(net.forward_single(Vector::Ones(2)).isZero());
  }
  SUBCASE("identity relu") {
    Layer l{Matrix::Identity(2, 2), Vector::Zero(2), Activation::ReLU};
    Mlp net({l});
    Vector x(2);
    x << -1.0, 2.0;
    const Vector y = net.forward_single(x);
    CHECK(y(0) == 0.0);
    CHECK(y(1) == 2.0);
  }
  SUBCASE("softmax head is a probability vector") {
    Rng rng = make_rng(1, {});
    for (int t = 0; t < 20; ++t) {
      Mlp net({8, 16, 5}, {Activation::ReLU, Activation::Softmax}, static_cast<std::uint64_t>(t));
      const Matrix y = net.forward(Matrix(random_matrix(rng, 8, 10) * 5.0));
      for (Eigen::Index c = 0; c < y.cols(); ++c) {
        CHECK((y.col(c).array() > 0.0).all());
        CHECK(std::abs(y.col(c).sum() - 1.0) < 1e-9);
      }
    }
  }
  SUBCASE("dimension mismatch") {
    Mlp net({3, 2}, {Activation::Linear}, 1);
    CHECK_THROWS_AS(net.forward_single(Vector::Zero(4)), std::invalid_argument);
  }
  SUBCASE("softmax only at the end") {
    CHECK_THROWS_AS(Mlp({3, 3, 2}, {Activation::Softmax, Activation::Linear}, 1), std::invalid_argument);
  }
}

TEST_CASE("forward is deterministic") {
  Rng rng = make_rng(2, {});
  Mlp net({4, 8, 3}, {Activation::Tanh, Activation::Linear}, 9);
  const Matrix x = random_matrix(rng, 4, 6);
  CHECK(net.forward(x) == net.forward(x));
  CHECK(Mlp({4, 8, 3}, {Activation::Tanh, Activation::Linear}, 9).parameters() == net.parameters());
}

TEST_CASE("single linear layer gradient is g x^T") {
  Rng rng = make_rng(3, {});
  Layer l{random_matrix(rng, 3, 4), Vector::Zero(3), Activation::Linear};
  Mlp net({l});
  const Matrix x = random_matrix(rng, 4, 1);
  const Matrix g = random_matrix(rng, 3, 1);
  const auto grads = net.backward(net.forward_cached(x), g);
  CHECK((grads.weights[0] - g * x.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((grads.input - l.weights.transpose() * g).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("ReLU uses subgradient 0 at the kink") {
  Layer l{Matrix::Identity(1, 1), Vector::Zero(1), Activation::ReLU};
  Mlp net({l});
  const Matrix x = Matrix::Zero(1, 1);
  const auto g = net.backward(net.forward_cached(x), Matrix::Ones(1, 1));
  CHECK(g.input(0, 0) == 0.0);
  CHECK(g.weights[0](0, 0) == 0.0);
}

TEST_CASE("backprop matches central finite differences on random nets") {
  Rng rng = make_rng(4, {});
  constexpr double kDelta = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Mlp net = random_net(rng, static_cast<std::uint64_t>(100 + trial));
    const Matrix x = random_matrix(rng, static_cast<Eigen::Index>(net.input_dim()), 3);
    const Matrix w = random_matrix(rng, static_cast<Eigen::Index>(net.output_dim()), 3);
    const auto analytic = net.backward(net.forward_cached(x), w);
    const auto flat_g = flatten(analytic);

    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double orig = params[i];
      Mlp probe = net;
      params[i] = orig + kDelta;
      probe.set_parameters(params);
      const double up = loss(probe, x, w);
      params[i] = orig - kDelta;
      probe.set_parameters(params);
      const double down = loss(probe, x, w);
      params[i] = orig;
      worst = std::max(worst, rel_err(flat_g[i], (up - down) / (2.0 * kDelta)));
    }
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        Matrix xp = x, xm = x;
        xp(r, c) += kDelta;
        xm(r, c) -= kDelta;
        worst = std::max(worst, rel_err(analytic.input(r, c), (loss(net, xp, w) - loss(net, xm, w)) / (2.0 * kDelta)));
      }
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("logit gradient for a softmax head") {
  Rng rng = make_rng(5, {});
  Mlp net({4, 6, 3}, {Activation::ReLU, Activation::Softmax}, 3);
  const Matrix x = random_matrix(rng, 4, 5);
  const auto cache = net.forward_cached(x);
  // Cross-entropy against class 1: dL/dlogits = p - onehot.
  Matrix dlogits = cache.output;
  Matrix dprob = Matrix::Zero(3, 5);
  for (Eigen::Index c = 0; c < 5; ++c) {
    dlogits(1, c) -= 1.0;
    dprob(1, c) = -1.0 / cache.output(1, c);
  }
  const auto a = net.backward(cache, dlogits, OutputGrad::wrt_logits);
  const auto b = net.backward(cache, dprob, OutputGrad::wrt_output);
  const auto fa = flatten(a), fb = flatten(b);
  for (std::size_t i = 0; i < fa.size(); ++i) CHECK(std::abs(fa[i] - fb[i]) < 1e-10);
}

TEST_CASE("stale cache is a contract violation") {
  Rng rng = make_rng(6, {});
  Mlp net({2, 3}, {Activation::Tanh}, 1);
  Mlp other({2, 3}, {Activation::Tanh}, 1);
  const auto cache = net.forward_cached(random_matrix(rng, 2, 1));
  CHECK_THROWS_AS(other.backward(cache, Matrix::Ones(3, 1)), ContractViolation);
  net.set_parameters(net.parameters());
  CHECK_THROWS_AS(net.backward(cache, Matrix::Ones(3, 1)), ContractViolation);
}

TEST_CASE("adam") {
  SUBCASE("zero gradients leave parameters unchanged") {
    Mlp net({3, 4, 2}, {Activation::ReLU, Activation::Linear}, 7);
    const auto before = net.parameters();
    auto state = make_adam(net, 1e-3);
    adam_step(net, net.zero_gradients(), state);
    CHECK(net.parameters() == before);
  }
  SUBCASE("scalar quadratic") {
    Layer l{Matrix::Ones(1, 1), Vector::Zero(1), Activation::Linear};
    Mlp net({l});
    auto state = make_adam(net, 0.1);
    auto grad_of = [&] {
      auto g = net.zero_gradients();
      g.weights[0](0, 0) = 2.0 * net.layer(0).weights(0, 0);  // d/dw w^2
      return g;
    };
    adam_step(net, grad_of(), state);
    CHECK(net.layer(0).weights(0, 0) < 1.0);
    int steps = 1;
    while (std::abs(net.layer(0).weights(0, 0)) >= 1e-3 && steps < 1000) {
      adam_step(net, grad_of(), state);
      ++steps;
    }
    CHECK(std::abs(net.layer(0).weights(0, 0)) < 1e-3);
    CHECK(steps <= 1000);
  }
  SUBCASE("shape mismatch") {
    Mlp a({3, 2}, {Activation::Linear}, 1);
    Mlp b({4, 2}, {Activation::Linear}, 1);
    auto state = make_adam(a, 1e-3);
    CHECK_THROWS_AS(adam_step(a, b.zero_gradients(), state), ContractViolation);
  }
}

TEST_CASE("blend_from") {
  Mlp main({3, 4, 2}, {Activation::ReLU, Activation::Linear}, 1);
  Mlp target({3, 4, 2}, {Activation::ReLU, Activation::Linear}, 2);
  const auto pm = main.parameters();
  const auto pt = target.parameters();
  Mlp t0 = target;
  t0.blend_from(main, 0.0);
  CHECK(t0.parameters() == pt);
  Mlp t1 = target;
  t1.blend_from(main, 1.0);
  CHECK(t1.parameters() == pm);
  Mlp t5 = target;
  t5.blend_from(main, 0.05);
  const auto p5 = t5.parameters();
  for (std::size_t i = 0; i < p5.size(); ++i) CHECK(std::abs(p5[i] - (0.05 * pm[i] + 0.95 * pt[i])) <= 1e-15);
}

TEST_CASE("CHNN round trip is bit exact") {
  Mlp net({5, 7, 7, 3}, {Activation::ReLU, Activation::Tanh, Activation::Softmax}, 11);
  const std::string bytes = encode_mlp(net);
  CHECK(bytes.substr(0, 4) == "CHNN");
  CHECK(bytes.size() == 4 + 4 + 4 + 3 * 12 + 8 * net.num_parameters());
  std::istringstream in(bytes, std::ios::binary);
  const Mlp back = read_mlp(in);
  CHECK(back.parameters() == net.parameters());
  CHECK(back.same_shape(net));
  CHECK(encode_mlp(back) == bytes);
  CHECK(back.checksum() == net.checksum());

  std::istringstream bad(std::string("NOPE") + bytes.substr(4), std::ios::binary);
  CHECK_THROWS(read_mlp(bad));
  std::istringstream truncated(bytes.substr(0, bytes.size() - 3), std::ios::binary);
  CHECK_THROWS(read_mlp(truncated));
}
