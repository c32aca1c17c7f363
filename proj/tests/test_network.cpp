#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "bshape/nn/gradcheck.hpp"
#include "bshape/nn/loss.hpp"
#include "bshape/nn/network.hpp"
#include "bshape/nn/optim.hpp"

using namespace bshape::nn;

namespace {

Cloud<float> random_cloud(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 20.0f);
  Cloud<float> c(3, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < 3; ++i) c(i, j) = d(rng);
  return c;
}

}  // namespace

TEST(Network, PermutationInvariantBitExact) {
  for (auto v : kAllVariants) {
    const auto p = init_params<float>(v, 11);
    const Network<float> net(p, 32.0f);
    const auto cloud = random_cloud(517, 3);
    std::vector<int> perm(517);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
    Cloud<float> shuffled(3, 517);
    for (int j = 0; j < 517; ++j) shuffled.col(j) = cloud.col(perm[static_cast<std::size_t>(j)]);
    const std::array<float, 2> tab{0.3f, -1.2f};
    const auto a = net.forward(cloud, tab);
    const auto b = net.forward(shuffled, tab);
    ASSERT_EQ(a.size(), output_dim(v));
    for (Eigen::Index i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]) << to_string(v);
  }
}

TEST(Network, GradcheckAllVariants) {
  for (auto v : kAllVariants) {
    GradcheckConfig cfg;
    cfg.variant = v;
    cfg.probes = 200;
    const auto r = run_gradcheck(cfg);
    EXPECT_GE(r.probes.size(), 100u);
    const double worst = r.max_rel_error;
    EXPECT_LT(worst, 1e-4) << to_string(v);
  }
}

TEST(Network, OutputShapesAndZeroParams) {
  for (auto v : kAllVariants) {
    const auto p = init_params<float>(v, 1);
    const Network<float> net(p, 32.0f);
    const std::array<float, 2> tab{1.0f, 2.0f};
    for (int b = 0; b < 4; ++b) EXPECT_EQ(net.forward(random_cloud(32, static_cast<std::uint64_t>(b)), tab).size(), output_dim(v));
    const auto zero = NetworkParams<float>::zeros(v);
    const Network<float> z(zero, 32.0f);
    EXPECT_EQ(z.forward(random_cloud(32, 9), tab), Vec<float>::Zero(output_dim(v)));
  }
  EXPECT_EQ(output_dim(Variant::full), 5);
  EXPECT_EQ(output_dim(Variant::vanilla), 10);
}

TEST(Network, LayerWidths) {
  const auto p = NetworkParams<double>::zeros(Variant::full);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> weights;
  for (const auto& a : p.arrays())
    if (a.cols > 1) weights.emplace_back(a.rows, a.cols);
  const std::vector<std::pair<Eigen::Index, Eigen::Index>> want{{64, 3},   {64, 64}, {128, 64}, {256, 128},
                                                                {16, 2},   {32, 16}, {128, 288}, {5, 128}};
  EXPECT_EQ(weights, want);
  const auto vanilla = NetworkParams<double>::zeros(Variant::vanilla);
  EXPECT_LT(vanilla.num_parameters(), p.num_parameters());
}

TEST(Network, VanillaIgnoresTabular) {
  const auto p = init_params<float>(Variant::vanilla, 4);
  const Network<float> net(p, 32.0f);
  const auto c = random_cloud(64, 2);
  EXPECT_EQ(net.forward(c, std::array<float, 2>{0, 0}), net.forward(c, std::array<float, 2>{5, -9}));
  EXPECT_EQ(net.forward(c, std::span<const float>{}), net.forward(c, std::array<float, 2>{5, -9}));
}

TEST(Network, NonWinningPointsDoNotMatter) {
  const auto p = init_params<double>(Variant::full, 8);
  const Network<double> net(p, 32.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 20.0);
  Cloud<double> c(3, 200);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = g(rng);
  const std::array<double, 2> tab{0.5, 0.5};
  SampleTrace<double> tr;
  const auto out = net.forward(c, tab, &tr);
  int checked = 0;
  for (Eigen::Index j = 0; j < c.cols() && checked < 5; ++j) {
    bool wins = false;
    for (Eigen::Index w = 0; w < tr.x.cols(); ++w) wins |= (tr.x.col(w) - c.col(j) / 32.0).norm() == 0.0;
    if (wins) continue;
    Cloud<double> moved = c;
    moved(1, j) += 1e-6;
    EXPECT_EQ(net.forward(moved, tab), out);
    ++checked;
  }
  EXPECT_EQ(checked, 5);
  EXPECT_LE(tr.winners.size(), 256u);
}

TEST(Loss, Examples) {
  Mat<double> pa(1, 1), pb(1, 1), ya(1, 1), yb(1, 1);
  pa << 1;
  pb << 0;
  ya << 0;
  yb << 0;
  EXPECT_DOUBLE_EQ(paired_loss(pa, pb, ya, yb, 1.0).value, 1.5);

  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  Mat<double> a(4, 5), b(4, 5), y1(4, 5), y2(4, 5);
  for (auto* m : {&a, &b, &y1, &y2})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = g(rng);
  const auto zero = paired_loss(a, b, a, b, 0.7);
  EXPECT_EQ(zero.value, 0.0);
  EXPECT_LT(zero.grad_a.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(zero.grad_b.cwiseAbs().maxCoeff(), 1e-12);
  const double mse_a = (a - y1).squaredNorm() / 20.0, mse_b = (b - y2).squaredNorm() / 20.0;
  EXPECT_NEAR(paired_loss(a, b, y1, y2, 0.0).value, 0.5 * (mse_a + mse_b), 1e-14);
  // Swapping the branches leaves the loss unchanged.
  EXPECT_NEAR(paired_loss(b, a, y2, y1, 0.7).value, paired_loss(a, b, y1, y2, 0.7).value, 1e-14);
}

TEST(Loss, ZeroLossGivesZeroParameterGradients) {
  for (auto v : kAllVariants) {
    const auto p = init_params<double>(v, 3);
    const Network<double> net(p, 32.0);
    std::vector<SampleTrace<double>> tr(2);
    Mat<double> out(2, output_dim(v));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 20.0);
    std::vector<Cloud<double>> clouds(2, Cloud<double>(3, 16));
    const std::array<double, 2> tab{0.1, -0.4};
    for (int s = 0; s < 2; ++s) {
      for (Eigen::Index i = 0; i < clouds[static_cast<std::size_t>(s)].size(); ++i)
        clouds[static_cast<std::size_t>(s)].data()[i] = g(rng);
      out.row(s) = net.forward(clouds[static_cast<std::size_t>(s)], tab, &tr[static_cast<std::size_t>(s)]).transpose();
    }
    const Mat<double> a = out.topRows(1), b = out.bottomRows(1);
    const auto loss = paired_loss(a, b, a, b, 1.0);
    auto grads = NetworkParams<double>::zeros(v);
    net.backward(tr[0], loss.grad_a.row(0).transpose(), grads);
    net.backward(tr[1], loss.grad_b.row(0).transpose(), grads);
    for (const auto& arr : grads.arrays())
      for (Eigen::Index i = 0; i < arr.size(); ++i) EXPECT_LT(std::abs(arr.data[i]), 1e-12) << arr.name;
  }
}

TEST(Optim, AdamExamples) {
  AdamConfig cfg;
  cfg.weight_decay = 0;
  double theta = 1, g = 1, m = 0, v = 0;
  adam_update<double>({&theta, 1}, {&g, 1}, {&m, 1}, {&v, 1}, 1, 0.1, cfg);
  EXPECT_NEAR(theta - 1.0, -0.1, 1e-8);

  theta = 1, g = 0, m = 0, v = 0;
  adam_update<double>({&theta, 1}, {&g, 1}, {&m, 1}, {&v, 1}, 1, 0.1, cfg);
  EXPECT_EQ(theta, 1.0);

  cfg.weight_decay = 0.005;
  theta = 1, g = 0, m = 0, v = 0;
  adam_update<double>({&theta, 1}, {&g, 1}, {&m, 1}, {&v, 1}, 1, 0.1, cfg);
  EXPECT_NEAR(theta, 0.9, 1e-5);
}

TEST(Optim, StepDecaySchedule) {
  const StepDecay s{1e-3, 200, 0.1};
  EXPECT_EQ(s.at(0), 1e-3);
  EXPECT_EQ(s.at(199), 1e-3);
  EXPECT_NEAR(s.at(200), 1e-4, 1e-18);
  EXPECT_NEAR(s.at(400), 1e-5, 1e-18);
}
