// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "stsheaf/sheaf.hpp"

#include "test_util.hpp"

using namespace stsheaf;
using testutil::dense_coboundary_matrix;
using testutil::dense_laplacian_matvec;
using testutil::random_connected_graph;
using testutil::random_signal;
using testutil::rel_err;

TEST_CASE("coboundary on a single edge and constants") {
  Graph p2 = testutil::path_graph(2);
  Sheaf s = make_identity_sheaf(p2, 1);
  Mat h(2, 1, {1.0, 0.0});
  Mat d = coboundary(s, h);
  REQUIRE(d.rows == 1);
  CHECK(d(0, 0) == Catch::Approx(-1.0));

  // identity maps, constant signal: every edge discrepancy vanishes
  Rng rng(3);
  Graph g = random_connected_graph(6, 4, rng);
  Sheaf ident = make_identity_sheaf(g, 3);
  Mat hc(6, 3);
  for (int v = 0; v < 6; ++v)
    for (int k = 0; k < 3; ++k) hc(v, k) = 2.5 - k;
  Mat dc = coboundary(ident, hc);
  for (double x : dc.data) CHECK(std::abs(x) < 1e-15);
}

TEST_CASE("coboundary equals the dense entry-built matrix") {
  Rng rng(17);
  Graph g = random_connected_graph(5, 4, rng);
  Sheaf s = make_random_sheaf(g, 3, rng);
  Mat h = random_signal(5, 3, rng);
  Mat got = coboundary(s, h);
  Mat delta = dense_coboundary_matrix(s);
  std::vector<double> want = testutil::matvec(delta, h.data);
  CHECK(rel_err(got.data, want) < 1e-12);
}

TEST_CASE("laplacian apply matches hand cases") {
  Graph p2 = testutil::path_graph(2);
  Sheaf s2 = make_identity_sheaf(p2, 1);
  std::vector<double> w{1.0};
  Mat h(2, 1, {1.0, 0.0});
  Mat lh = sheaf_laplacian_apply(s2, h, w);
  CHECK(lh(0, 0) == Catch::Approx(1.0));
  CHECK(lh(1, 0) == Catch::Approx(-1.0));

  // identity maps reduce to the classical graph Laplacian (D - A) h
  Graph p3 = testutil::path_graph(3);
  Sheaf s3 = make_identity_sheaf(p3, 1);
  Mat h3(3, 1, {1.0, 2.0, 3.0});
  Mat lh3 = sheaf_laplacian_apply(s3, h3, unit_weights(p3));
  CHECK(lh3(0, 0) == Catch::Approx(-1.0));
  CHECK(lh3(1, 0) == Catch::Approx(0.0).margin(1e-15));
  CHECK(lh3(2, 0) == Catch::Approx(1.0));
}

TEST_CASE("laplacian apply equals the dense oracle across random instances") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform_int(7));   // N <= 8
    int d = 1 + static_cast<int>(rng.uniform_int(4));   // d <= 4
    Graph g = random_connected_graph(n, static_cast<int>(rng.uniform_int(6)), rng);
    Sheaf s = make_random_sheaf(g, d, rng);
    std::vector<double> w(g.edges.size());
    for (double& x : w) x = rng.uniform(0.2, 1.5);
    Mat h = random_signal(n, d, rng);
    Mat got = sheaf_laplacian_apply(s, h, w);
    std::vector<double> want = dense_laplacian_matvec(s, w, h.data);
    REQUIRE(rel_err(got.data, want) < 1e-10);

    // and the assembled matrix times flatten(h) gives the same thing
    Mat L = assemble_dense_laplacian(s, w);
    std::vector<double> want2 = testutil::matvec(L, h.data);
    REQUIRE(rel_err(got.data, want2) < 1e-10);
  }
}

TEST_CASE("dense assembly block values") {
  Graph p2 = testutil::path_graph(2);
  Sheaf s;
  s.graph = &p2;
  s.stalk_dim = 1;
  s.r_src = Mat(1, 1, {2.0});
  s.r_dst = Mat(1, 1, {1.0});
  Mat L = assemble_dense_laplacian(s, std::vector<double>{1.0});
  CHECK(L(0, 0) == Catch::Approx(4.0));
  CHECK(L(0, 1) == Catch::Approx(-2.0));
  CHECK(L(1, 0) == Catch::Approx(-2.0));
  CHECK(L(1, 1) == Catch::Approx(1.0));

  Graph p3 = testutil::path_graph(3);
  Sheaf ident = make_identity_sheaf(p3, 1);
  Mat L3 = assemble_dense_laplacian(ident, unit_weights(p3));
  std::vector<double> want{1, -1, 0, -1, 2, -1, 0, -1, 1};
  CHECK(rel_err(L3.data, want) < 1e-14);
}

TEST_CASE("dense assembly is symmetric PSD and capped") {
  Rng rng(31);
  Graph g = random_connected_graph(7, 5, rng);
  Sheaf s = make_random_sheaf(g, 3, rng);
  std::vector<double> w(g.edges.size(), 0.7);
  Mat L = assemble_dense_laplacian(s, w);
  double asym = 0.0;
  for (int i = 0; i < L.rows; ++i)
    for (int j = 0; j < L.cols; ++j) asym = std::max(asym, std::abs(L(i, j) - L(j, i)));
  CHECK(asym <= 1e-12);

  Eigen::MatrixXd M = as_eigen(L);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10);

  CHECK_THROWS_AS(assemble_dense_laplacian(s, w, /*dense_cap=*/8), ConfigError);
}

TEST_CASE("dirichlet energy") {
  Graph p2 = testutil::path_graph(2);
  Mat h(2, 1, {1.0, 0.0});
  CHECK(dirichlet_energy(p2, h) == Catch::Approx(0.5));

  Mat hc(2, 1, {3.0, 3.0});
  CHECK(dirichlet_energy(p2, hc) == Catch::Approx(0.0));

  Graph p3 = testutil::path_graph(3);
  Mat h3(3, 2, {0, 0, 1, 1, 2, 2});
  CHECK(dirichlet_energy(p3, h3) == Catch::Approx(2.0));
}

TEST_CASE("sheaf energy equals the quadratic form and reduces to dirichlet") {
  Rng rng(41);
  Graph g = random_connected_graph(6, 5, rng);
  Mat h = random_signal(6, 2, rng);

  Sheaf ident = make_identity_sheaf(g, 2);
  CHECK(sheaf_energy(ident, h, unit_weights(g)) ==
        Catch::Approx(dirichlet_energy(g, h)).epsilon(1e-12));

  // aligned section has zero energy
  Graph p2 = testutil::path_graph(2);
  Sheaf s;
  s.graph = &p2;
  s.stalk_dim = 1;
  s.r_src = Mat(1, 1, {2.0});
  s.r_dst = Mat(1, 1, {1.0});
  Mat ha(2, 1, {1.0, 2.0});
  CHECK(sheaf_energy(s, ha, std::vector<double>{1.0}) == Catch::Approx(0.0).margin(1e-15));

  for (int trial = 0; trial < 30; ++trial) {
    Sheaf sr = make_random_sheaf(g, 2, rng);
    std::vector<double> w(g.edges.size());
    for (double& x : w) x = rng.uniform(0.2, 1.5);
    Mat hr = random_signal(6, 2, rng);
    Mat L = assemble_dense_laplacian(sr, w);
    std::vector<double> lh = testutil::matvec(L, hr.data);
    double quad = 0.0;
    for (size_t i = 0; i < lh.size(); ++i) quad += hr.data[i] * lh[i];
    CHECK(sheaf_energy(sr, hr, w) == Catch::Approx(0.5 * quad).epsilon(1e-10));
  }
}

TEST_CASE("energy gradient is the laplacian apply (finite differences)") {
  Rng rng(47);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform_int(6));
    int d = 1 + static_cast<int>(rng.uniform_int(3));
    Graph g = random_connected_graph(n, static_cast<int>(rng.uniform_int(5)), rng);
    Sheaf s = make_random_sheaf(g, d, rng);
    std::vector<double> w(g.edges.size());
    for (double& x : w) x = rng.uniform(0.2, 1.5);
    Mat h = random_signal(n, d, rng);
    Mat analytic = sheaf_laplacian_apply(s, h, w);
    const double step = 1e-5;
    std::vector<double> fd(h.data.size());
    for (size_t i = 0; i < h.data.size(); ++i) {
      Mat hp = h, hm = h;
      hp.data[i] += step;
      hm.data[i] -= step;
      fd[i] = (sheaf_energy(s, hp, w) - sheaf_energy(s, hm, w)) / (2 * step);
    }
    REQUIRE(rel_err(analytic.data, fd) < 1e-5);
  }
}

TEST_CASE("quadratic form is positive semidefinite") {
  Rng rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform_int(7));
    Graph g = random_connected_graph(n, static_cast<int>(rng.uniform_int(5)), rng);
    Sheaf s = make_random_sheaf(g, 2, rng);
    std::vector<double> w(g.edges.size());
    for (double& x : w) x = rng.uniform(0.1, 2.0);
    Mat h = random_signal(n, 2, rng);
    Mat lh = sheaf_laplacian_apply(s, h, w);
    double quad = 0.0, norm2 = 0.0;
    for (size_t i = 0; i < h.data.size(); ++i) {
      quad += h.data[i] * lh.data[i];
      norm2 += h.data[i] * h.data[i];
    }
    CHECK(quad >= -1e-10 * norm2);
  }
}

TEST_CASE("kernel dimensions") {
  // identity sheaf on a connected graph: constants per coordinate
  Rng rng(59);
  Graph g = random_connected_graph(6, 4, rng);
  Sheaf ident = make_identity_sheaf(g, 2);
  CHECK(kernel_dimension(ident, unit_weights(g)) == 2);

  // tree with generic positive maps, d = 1: ratio conditions always solvable
  Graph p3 = testutil::path_graph(3);
  Sheaf tree = make_random_sheaf(p3, 1, rng, 0.5, 1.5, /*signed_entries=*/false);
  CHECK(kernel_dimension(tree, unit_weights(p3)) == 1);

  // C3 with cycle-inconsistent maps: full rank
  Graph c3 = testutil::cycle_graph(3);
  Sheaf inc;
  inc.graph = &c3;
  inc.stalk_dim = 1;
  inc.r_src = Mat(3, 1, {1.0, 1.0, 1.0});
  inc.r_dst = Mat(3, 1, {2.0, 2.0, 2.0});
  CHECK(kernel_dimension(inc, unit_weights(c3)) == 0);
}

TEST_CASE("orientation covariance") {
  // flipping a stored edge while swapping its restriction pair changes
  // nothing observable
  Rng rng(61);
  Graph g = random_connected_graph(6, 4, rng);
  Sheaf s = make_random_sheaf(g, 3, rng);
  std::vector<double> w(g.edges.size());
  for (double& x : w) x = rng.uniform(0.2, 1.5);
  Mat h = random_signal(6, 3, rng);

  Graph g2 = g;
  size_t flip = rng.uniform_int(g.edges.size());
  std::swap(g2.edges[flip].src, g2.edges[flip].dst);
  Sheaf s2 = s;
  s2.graph = &g2;
  for (int k = 0; k < 3; ++k)
    std::swap(s2.r_src(static_cast<int>(flip), k), s2.r_dst(static_cast<int>(flip), k));

  Mat a = sheaf_laplacian_apply(s, h, w);
  Mat b = sheaf_laplacian_apply(s2, h, w);
  CHECK(rel_err(a.data, b.data) < 1e-14);
  CHECK(sheaf_energy(s, h, w) == Catch::Approx(sheaf_energy(s2, h, w)).epsilon(1e-14));
  CHECK(kernel_dimension(s, w) == kernel_dimension(s2, w));
}

TEST_CASE("sheaf json round trip") {
  Rng rng(67);
  Graph g = random_connected_graph(5, 3, rng);
  Sheaf s = make_random_sheaf(g, 3, rng);
  nlohmann::json j = sheaf_to_json(s);
  Sheaf back = sheaf_from_json(g, j);
  CHECK(back.stalk_dim == s.stalk_dim);
  CHECK(back.r_src.data == s.r_src.data);
  CHECK(back.r_dst.data == s.r_dst.data);

  nlohmann::json bad = j;
  bad["r_src"].erase(0);
  CHECK_THROWS_AS(sheaf_from_json(g, bad), ConfigError);
}

TEST_CASE("shape mismatches are rejected") {
  Graph p2 = testutil::path_graph(2);
  Sheaf s = make_identity_sheaf(p2, 2);
  Mat wrong(3, 2);
  CHECK_THROWS_AS(coboundary(s, wrong), std::invalid_argument);
  CHECK_THROWS_AS(sheaf_laplacian_apply(s, wrong, std::vector<double>{1.0}),
                  std::invalid_argument);
  Mat ok(2, 2);
  CHECK_THROWS_AS(sheaf_laplacian_apply(s, ok, std::vector<double>{1.0, 1.0}),
                  std::invalid_argument);
}
