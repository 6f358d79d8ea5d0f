#include "doctest.h"

#include <Eigen/Geometry>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oaslam/association.hpp"
#include "oaslam/errors.hpp"

using namespace oaslam;

namespace {

Embedding random_embedding(std::mt19937_64& rng, int dim = 16) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = n(rng);
  return Embedding(v);
}

Landmark make_landmark(int id, const Vec3& p, const Embedding& e) { return Landmark{id, p, e, 1, std::nullopt, {}}; }

// Unit vector in the (e0, e1) plane at angle a from e0.
Embedding at_angle(double a, int dim = 8) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  v(0) = std::cos(a);
  v(1) = std::sin(a);
  return Embedding(v);
}

}  // namespace

TEST_CASE("chi-square quantile matches the bisection oracle") {
  for (int dof : {2, 4, 6, 8}) {
    for (double p : {0.5, 0.9, 0.95, 0.99}) {
      CHECK(chi_square_quantile(p, dof) == doctest::Approx(testing::chi_square_quantile_even(p, dof)).epsilon(1e-12));
    }
  }
  CHECK(chi_square_quantile(0.95, 6) == doctest::Approx(12.591587).epsilon(1e-7));
  CHECK_THROWS_AS(chi_square_quantile(1.0, 6), InputError);
  CHECK_THROWS_AS(chi_square_quantile(0.95, 0), InputError);
}

TEST_CASE("cosine gate examples") {
  std::mt19937_64 rng(3);
  const Embedding e = random_embedding(rng);
  CHECK(cosine_gate(e, {}, 0.8).empty());
  const std::vector<Landmark> one{make_landmark(7, Vec3::Zero(), e)};
  CHECK(cosine_gate(e, one, 0.8) == std::vector<int>{7});

  // Prototypes separated by more than arccos(0.8) from the observation.
  const double sep = std::acos(0.8) + 0.05;
  const std::vector<Landmark> protos{make_landmark(0, Vec3::Zero(), at_angle(0.0)),
                                     make_landmark(1, Vec3::Zero(), at_angle(sep)),
                                     make_landmark(2, Vec3::Zero(), at_angle(-sep))};
  CHECK(cosine_gate(at_angle(0.0), protos, 0.8) == std::vector<int>{0});
  CHECK(cosine_gate(at_angle(sep), protos, 0.8) == std::vector<int>{1});
}

TEST_CASE("cosine gate is monotone in the threshold and scale invariant") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Landmark> lms;
    for (int i = 0; i < 12; ++i) lms.push_back(make_landmark(i, Vec3::Zero(), random_embedding(rng, 4)));
    const Embedding obs = random_embedding(rng, 4);
    double t1 = u(rng), t2 = u(rng);
    if (t1 > t2) std::swap(t1, t2);
    const auto low = cosine_gate(obs, lms, t1);
    const auto high = cosine_gate(obs, lms, t2);
    CHECK(high.size() <= low.size());
    for (int id : high) CHECK(std::find(low.begin(), low.end(), id) != low.end());

    // Power-of-two scaling keeps every similarity bitwise identical.
    const double scale = std::ldexp(1.0, static_cast<int>(std::round(u(rng) * 20)));
    std::vector<Landmark> scaled = lms;
    for (auto& lm : scaled) lm.embedding = Embedding(lm.embedding.values() * scale);
    const Embedding obs_scaled(obs.values() * std::ldexp(1.0, static_cast<int>(std::round(u(rng) * 20))));
    CHECK(cosine_gate(obs_scaled, scaled, t1) == low);
  }
}

TEST_CASE("mahalanobis gate examples") {
  std::mt19937_64 rng(1);
  const Embedding e = random_embedding(rng);
  const Landmark lm = make_landmark(0, Vec3(1, 2, 3), e);
  const double q = chi_square_quantile(0.95, 6);

  auto at_zero = mahalanobis_gate(Vec3(1, 2, 3), lm, Mat3::Identity(), q);
  CHECK(at_zero.d2 == 0.0);
  CHECK(at_zero.passes);

  const Vec3 off20(2, 4, 0);  // |d|^2 = 20
  auto far = mahalanobis_gate(lm.position + off20, lm, Mat3::Identity(), q);
  CHECK(far.d2 == doctest::Approx(20.0));
  CHECK_FALSE(far.passes);

  const Vec3 off40 = Vec3(6, 2, 0);  // |d|^2 = 40
  auto scaled = mahalanobis_gate(lm.position + off40, lm, 4.0 * Mat3::Identity(), q);
  CHECK(scaled.d2 == doctest::Approx(10.0));
  CHECK(scaled.passes);

  Mat3 bad = Mat3::Identity();
  bad(2, 2) = -1.0;
  CHECK_THROWS_AS(mahalanobis_gate(lm.position, lm, bad, q), GatingError);
  Mat3 asym = Mat3::Identity();
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(mahalanobis_gate(lm.position, lm, asym, q), GatingError);
}

TEST_CASE("isotropic mahalanobis gate is a euclidean ball") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> sig(0.05, 3.0);
  const double q = chi_square_quantile(0.95, 6);
  const Landmark lm = make_landmark(0, Vec3::Zero(), random_embedding(rng));
  for (int i = 0; i < 500; ++i) {
    const double s = sig(rng);
    Vec3 dir = testing::random_vec3(rng, 1.0).normalized();
    const double radius = s * std::sqrt(q);
    // Well inside / well outside, avoiding the rounding band at the boundary.
    CHECK(mahalanobis_gate(dir * radius * 0.999, lm, s * s * Mat3::Identity(), q).passes);
    CHECK_FALSE(mahalanobis_gate(dir * radius * 1.001, lm, s * s * Mat3::Identity(), q).passes);
    const Vec3 p = testing::random_vec3(rng, 3.0 * radius);
    const bool passes = mahalanobis_gate(p, lm, s * s * Mat3::Identity(), q).passes;
    if (p.norm() < radius * (1 - 1e-9)) CHECK(passes);
    if (p.norm() > radius * (1 + 1e-9)) CHECK_FALSE(passes);
  }
}

TEST_CASE("chi-square gate boundary located by bisection") {
  std::mt19937_64 rng(2);
  const Landmark lm = make_landmark(0, Vec3::Zero(), random_embedding(rng));
  const double q = chi_square_quantile(0.95, 6);
  double lo = 0.0, hi = 100.0;  // squared distance along x
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mahalanobis_gate(Vec3(std::sqrt(mid), 0, 0), lm, Mat3::Identity(), q).passes ? lo : hi) = mid;
  }
  CHECK(lo == doctest::Approx(12.591587).epsilon(1e-7));
}

TEST_CASE("select_hypothesis") {
  CHECK(select_hypothesis({}).outcome == AssociationDecision::Outcome::kNewLandmark);
  auto d = select_hypothesis({{4, 0.9, 7.0, true}, {2, 0.85, 3.0, true}});
  CHECK(d.outcome == AssociationDecision::Outcome::kMatched);
  CHECK(d.landmark_id == 2);
  CHECK(d.candidate_scores.size() == 2);
  // Tie on d2: higher cosine, then lower id.
  CHECK(select_hypothesis({{4, 0.9, 3.0, true}, {2, 0.85, 3.0, true}}).landmark_id == 4);
  CHECK(select_hypothesis({{4, 0.9, 3.0, true}, {2, 0.9, 3.0, true}}).landmark_id == 2);
  // Candidates that failed a gate are never chosen.
  CHECK(select_hypothesis({{1, 0.9, 1.0, false}}).outcome == AssociationDecision::Outcome::kNewLandmark);
}

TEST_CASE("associate_frame enforces per-frame uniqueness") {
  std::mt19937_64 rng(9);
  const Embedding e = random_embedding(rng);
  const std::vector<Landmark> lms{make_landmark(0, Vec3(0, 0, 0), e), make_landmark(1, Vec3(50, 0, 0), e)};
  AssociationConfig cfg;
  const Mat3 c = Mat3::Identity() * 0.25;
  // Two detections both near landmark 0; the closer one wins it.
  const std::vector<FrameObservation> obs{{Vec3(0.3, 0, 0), e, c}, {Vec3(0.1, 0, 0), e, c}};
  const auto decisions = associate_frame(obs, lms, {}, cfg);
  REQUIRE(decisions.size() == 2);
  CHECK(decisions[1].outcome == AssociationDecision::Outcome::kMatched);
  CHECK(decisions[1].landmark_id == 0);
  CHECK(decisions[0].outcome == AssociationDecision::Outcome::kNewLandmark);
  // Scores recorded for every landmark passing the cosine gate.
  CHECK(decisions[0].candidate_scores.size() == 2);
}

TEST_CASE("associate_frame geometric and semantic modes") {
  std::mt19937_64 rng(4);
  const Embedding a = at_angle(0.0), b = at_angle(1.2);
  const std::vector<Landmark> lms{make_landmark(0, Vec3(0, 0, 0), a)};
  const std::vector<FrameObservation> obs{{Vec3(0.2, 0, 0), b}};

  AssociationConfig full;
  CHECK(associate_frame(obs, lms, {}, full)[0].outcome == AssociationDecision::Outcome::kNewLandmark);

  AssociationConfig geo;
  geo.cosine_threshold = -1.0;
  geo.use_mahalanobis = false;
  geo.nn_radius = 0.5;
  auto d = associate_frame(obs, lms, {}, geo);
  CHECK(d[0].outcome == AssociationDecision::Outcome::kMatched);
  CHECK(*d[0].candidate_scores[0].d2 == doctest::Approx(0.04));
  geo.nn_radius = 0.1;
  CHECK(associate_frame(obs, lms, {}, geo)[0].outcome == AssociationDecision::Outcome::kNewLandmark);

  // Landmark uncertainty widens the gate.
  AssociationConfig unc;
  unc.cosine_threshold = -1.0;
  const std::vector<FrameObservation> far{{Vec3(1.0, 0, 0), b, Mat3::Identity() * 0.01}};
  CHECK(associate_frame(far, lms, {}, unc)[0].outcome == AssociationDecision::Outcome::kNewLandmark);
  const std::vector<std::optional<Mat3>> cov{Mat3::Identity()};
  CHECK(associate_frame(far, lms, cov, unc)[0].outcome == AssociationDecision::Outcome::kMatched);

  // Non-PD covariance: unmatched with a logged note.
  Mat3 bad = Mat3::Identity() * -5.0;
  const std::vector<std::optional<Mat3>> badcov{bad};
  auto g = associate_frame(far, lms, badcov, unc);
  CHECK(g[0].outcome == AssociationDecision::Outcome::kNewLandmark);
  CHECK_FALSE(g[0].note.empty());
  CHECK_FALSE(g[0].candidate_scores[0].d2.has_value());
  (void)rng;
}

TEST_CASE("associate_frame is deterministic") {
  std::mt19937_64 rng(21);
  std::vector<Landmark> lms;
  for (int i = 0; i < 20; ++i) lms.push_back(make_landmark(i, testing::random_vec3(rng, 5.0), random_embedding(rng, 4)));
  std::vector<FrameObservation> obs;
  for (int i = 0; i < 8; ++i)
    obs.push_back({testing::random_vec3(rng, 5.0), random_embedding(rng, 4), Mat3::Identity()});
  AssociationConfig cfg;
  cfg.cosine_threshold = 0.0;
  const auto a = associate_frame(obs, lms, {}, cfg);
  const auto b = associate_frame(obs, lms, {}, cfg);
  std::vector<int> used;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].outcome == b[i].outcome);
    CHECK(a[i].landmark_id == b[i].landmark_id);
    if (a[i].outcome == AssociationDecision::Outcome::kMatched) {
      CHECK(std::find(used.begin(), used.end(), a[i].landmark_id) == used.end());
      used.push_back(a[i].landmark_id);
      bool passed = false;
      for (const auto& s : a[i].candidate_scores) passed |= (s.landmark_id == a[i].landmark_id && s.passed);
      CHECK(passed);
    }
  }
}

TEST_CASE("observation_covariance matches a finite-difference propagation") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_real_distribution<double> ang(-0.5, 0.5), z(1.0, 8.0);
    const double b = ang(rng), e = ang(rng), d = z(rng);
    const Mat3 R = Eigen::Quaterniond::UnitRandom().toRotationMatrix();
    const Vec3 s(0.03, 0.07, 0.4);
    auto point = [&](const Vec3& m) { return Vec3(R * Vec3(m.z() * std::tan(m.x()), m.z() * std::tan(m.y()), m.z())); };
    const Vec3 m0(b, e, d);
    Mat3 J;
    for (int k = 0; k < 3; ++k) {
      Vec3 h = Vec3::Zero();
      h(k) = 1e-6;
      J.col(k) = (point(m0 + h) - point(m0 - h)) / 2e-6;
    }
    const Mat3 expected = J * s.cwiseProduct(s).asDiagonal() * J.transpose();
    const Mat3 got = observation_covariance(b, e, d, R, s);
    CHECK((got - expected).norm() < 1e-7 * (1.0 + expected.norm()));
    CHECK((got - got.transpose()).norm() < 1e-12);
  }
}
