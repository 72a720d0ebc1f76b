#include <gtest/gtest.h>

#include "vadet/clustering.hpp"
#include "vadet/metrics.hpp"

using namespace vadet;
using namespace vadet::clustering;

namespace {

/// K isotropic blobs with unit spread around centers `sep` apart on a simplex-like layout.
Mat blobs(int K, int per, int dim, double sep, Rng& rng, std::vector<int>* gold) {
  Mat x(K * per, dim);
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < per; ++i) {
      for (int j = 0; j < dim; ++j) x(k * per + i, j) = rng.normal() + (j == k % dim ? sep : 0.0) + (j == 0 ? sep * (k / dim) : 0.0);
      gold->push_back(k);
    }
  }
  return x;
}

double row_entropy(const Mat& p, Eigen::Index i) {
  double h = 0;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    if (p(i, j) > 0) h -= p(i, j) * std::log(p(i, j));
  }
  return h;
}

}  // namespace

TEST(KMeans, SeparatesTwoBlobs) {
  Rng r(1);
  std::vector<int> gold;
  Mat x = blobs(2, 50, 2, 20.0, r, &gold);
  auto cm = kmeans(x, 2, 7);
  EXPECT_DOUBLE_EQ(metrics::nmi(cm.labels, gold), 1.0);
  EXPECT_DOUBLE_EQ(metrics::cluster_accuracy(cm.labels, gold), 1.0);
}

TEST(KMeans, OnePointPerCluster) {
  Mat x(4, 2);
  x << 0, 0, 1, 0, 0, 3, 5, 5;
  auto cm = kmeans(x, 4, 3);
  EXPECT_NEAR(cm.inertia, 0.0, 1e-12);
  std::vector<int> seen = cm.labels;
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(seen, (std::vector<int>{0, 1, 2, 3}));
}

TEST(KMeans, SeedDeterminesResultAndTooManyClustersThrows) {
  Rng r(2);
  std::vector<int> gold;
  Mat x = blobs(3, 30, 3, 2.0, r, &gold);
  EXPECT_EQ(kmeans(x, 3, 11).centroids, kmeans(x, 3, 11).centroids);
  EXPECT_THROW(kmeans(x, 91, 1), std::invalid_argument);
}

TEST(KMeans, InertiaNonIncreasingWithIterations) {
  Rng r(3);
  std::vector<int> gold;
  Mat x = blobs(4, 40, 3, 1.5, r, &gold);
  KMeansConfig c;
  c.n_init = 1;
  c.tol = 0;
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= 12; ++it) {
    c.max_iter = it;
    const double in = kmeans(x, 4, 5, c).inertia;
    EXPECT_LE(in, prev + 1e-9) << it;
    prev = in;
  }
}

TEST(Dec, SoftAssignRowsAreDistributions) {
  Rng r(4);
  Mat z(50, 3), mu(4, 3);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = 100 * r.normal();
  for (Eigen::Index i = 0; i < mu.size(); ++i) mu.data()[i] = r.normal();
  for (double alpha : {0.5, 1.0, 3.0}) {
    Mat q = dec_soft_assign(z, mu, alpha);
    EXPECT_TRUE(q.allFinite());
    EXPECT_GE(q.minCoeff(), 0.0);
    for (Eigen::Index i = 0; i < q.rows(); ++i) EXPECT_NEAR(q.row(i).sum(), 1.0, 1e-6);
  }
}

TEST(Dec, SoftAssignExamples) {
  Mat mu(3, 2);
  mu << 0, 0, 10, 0, 0, 10;
  Mat z(2, 2);
  z << 10, 0, 0, 0;
  Mat q = dec_soft_assign(z, mu);
  Eigen::Index k;
  q.row(0).maxCoeff(&k);
  EXPECT_EQ(k, 1);
  // Hand value: kernels 1/(1+d^2) with d^2 = 0, 100, 100.
  EXPECT_NEAR(q(1, 0), 1.0 / (1.0 + 2.0 / 101.0), 1e-12);
  Mat eq(4, 2);
  eq << 1, 0, -1, 0, 0, 1, 0, -1;
  Mat center = Mat::Zero(1, 2);
  Mat u = dec_soft_assign(center, eq);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(u(0, j), 0.25, 1e-12);
}

TEST(Dec, TargetSharpensAndKeepsOneHot) {
  Rng r(5);
  Mat q(200, 4);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = r.uniform() + 1e-3;
  q = q.array().colwise() / q.rowwise().sum().array();
  Mat p = dec_target(q);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
    // Hand formula for this row.
    Eigen::RowVectorXd f = q.colwise().sum();
    Eigen::RowVectorXd want = q.row(i).array().square() / f.array();
    want /= want.sum();
    EXPECT_LT((p.row(i) - want).cwiseAbs().maxCoeff(), 1e-12);
  }
  // Sharpening lowers entropy whenever the cluster frequencies are equal.
  Mat bal(3, 3);
  bal << 0.5, 0.3, 0.2, 0.2, 0.5, 0.3, 0.3, 0.2, 0.5;
  Mat pb = dec_target(bal);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_LE(row_entropy(pb, i), row_entropy(bal, i));
  Mat hot = Mat::Zero(3, 2);
  hot(0, 0) = hot(1, 1) = hot(2, 0) = 1;
  EXPECT_EQ(dec_target(hot), hot);
  EXPECT_DOUBLE_EQ(dec_kl(hot, hot), 0.0);
}

TEST(Dec, KlFallsWithinEachEpochAndStopsOnStableLabels) {
  Rng r(6);
  std::vector<int> gold;
  Mat x = blobs(3, 60, 3, 5.0, r, &gold);
  auto cm = kmeans(x, 3, 1);
  DecTrace tr;
  auto out = dec_refine(x, cm, {}, &tr);
  ASSERT_FALSE(tr.kl.empty());
  ASSERT_EQ(tr.kl.size(), tr.label_change.size());
  if (tr.converged) {
    EXPECT_LT(tr.label_change.back(), 1e-3);
  }
  // With P held fixed, the inner gradient steps lower KL(P || Q).
  DecConfig one;
  one.max_epochs = 1;
  auto step = dec_refine(x, cm, one);
  Mat q0 = dec_soft_assign(x / step.scale, cm.centroids / step.scale);
  Mat p0 = dec_target(q0);
  EXPECT_LT(dec_kl(p0, step.q), dec_kl(p0, q0));
  for (Eigen::Index i = 0; i < out.q.rows(); ++i) {
    EXPECT_NEAR(out.q.row(i).sum(), 1.0, 1e-9);
    Eigen::Index k;
    out.q.row(i).maxCoeff(&k);
    EXPECT_EQ(out.labels[static_cast<std::size_t>(i)], k);
  }
  EXPECT_TRUE(out.centroids.allFinite());
  EXPECT_GE(metrics::nmi(out.labels, gold), 0.95);
}

TEST(Dec, DeterministicAndReseedsEmptyCluster) {
  Rng r(7);
  std::vector<int> gold;
  Mat x = blobs(2, 40, 2, 8.0, r, &gold);
  ClusterModel cm = kmeans(x, 2, 3);
  EXPECT_EQ(dec_refine(x, cm).centroids, dec_refine(x, cm).centroids);
  // A centroid far from every point owns nothing at the first epoch.
  ClusterModel bad = cm;
  bad.K = 3;
  bad.centroids.conservativeResize(3, 2);
  bad.centroids.row(2) << 1e4, 1e4;
  auto fixed = dec_refine(x, bad);
  std::vector<int> count(3, 0);
  for (int l : fixed.labels) ++count[static_cast<std::size_t>(l)];
  for (int c : count) EXPECT_GT(c, 0);
}

TEST(AspectCentroids, MeansOfMembers) {
  Mat z(4, 2);
  z << 0, 0, 2, 2, 3, 3, 3, 3;
  auto cs = aspect_centroids({0, 0, 1, 1}, z, 3);
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(cs[0].z_hat, Eigen::Vector2d(1, 1));
  EXPECT_EQ(cs[0].count, 2);
  EXPECT_EQ(cs[1].z_hat, Eigen::Vector2d(3, 3));
  Mat zp(4, 2);
  zp << 2, 2, 3, 3, 0, 0, 3, 3;
  auto cp = aspect_centroids({0, 1, 0, 1}, zp, 3);
  EXPECT_EQ(cp[0].z_hat, cs[0].z_hat);
  EXPECT_EQ(cp[1].z_hat, cs[1].z_hat);
  EXPECT_THROW(aspect_centroids({0}, z, 2), std::invalid_argument);
}
