#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "syntrack/kinematics.hpp"
#include "syntrack/random.hpp"

using namespace syntrack;

TEST_CASE("transition matrices carry the printed T structure") {
    const auto tm = transition_matrices(1.0);
    CHECK(tm.F(0, 2) == doctest::Approx(1.0));
    CHECK(tm.F(1, 3) == doctest::Approx(1.0));
    CHECK(tm.G(0, 0) == doctest::Approx(0.5));
    CHECK(tm.G(2, 0) == doctest::Approx(1.0));

    const auto half = transition_matrices(0.5);
    CHECK(half.F(0, 2) == doctest::Approx(0.5));
    CHECK(half.G(0, 0) == doctest::Approx(0.125));

    const auto tiny = transition_matrices(1e-12);
    CHECK((tiny.F - Mat4::Identity()).norm() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK_THROWS_AS(transition_matrices(0.0), std::invalid_argument);
}

TEST_CASE("mode noise covariance at the axis-aligned modes") {
    NoiseConfig cfg;
    cfg.sigma_along = 0.5;
    cfg.sigma_ortho = 0.05;
    const double a2 = 0.25, o2 = 0.0025;

    const Mat2 qh = mode_noise_cov(mode_direction("h"), cfg);  // angle 2*pi
    CHECK(qh(0, 0) == doctest::Approx(o2).epsilon(1e-9));
    CHECK(qh(1, 1) == doctest::Approx(a2).epsilon(1e-9));
    CHECK(qh(0, 1) == doctest::Approx(0.0).epsilon(1e-12));

    const Mat2 qb = mode_noise_cov(mode_direction("b"), cfg);  // angle pi/2
    CHECK(qb(0, 0) == doctest::Approx(a2).epsilon(1e-9));
    CHECK(qb(1, 1) == doctest::Approx(o2).epsilon(1e-9));
}

TEST_CASE("mode noise covariance keeps the same spectrum for every mode") {
    NoiseConfig cfg;
    for (const auto& mode : mode_directions()) {
        const Mat2 q = mode_noise_cov(mode, cfg);
        CHECK((q - q.transpose()).norm() == doctest::Approx(0.0).epsilon(1e-12));
        Eigen::SelfAdjointEigenSolver<Mat2> es(q);
        CHECK(es.eigenvalues()(0) == doctest::Approx(cfg.ortho() * cfg.ortho()).epsilon(1e-9));
        CHECK(es.eigenvalues()(1) == doctest::Approx(cfg.along() * cfg.along()).epsilon(1e-9));
    }
}

TEST_CASE("literal noise pairing swaps the component roles") {
    NoiseConfig cfg;
    cfg.literal_noise_pairing = true;
    CHECK(cfg.along() == doctest::Approx(0.05));
    CHECK(cfg.ortho() == doctest::Approx(0.5));
}

TEST_CASE("observe: radial geometry") {
    KinematicState s;
    s.x = 3.0;
    s.y = 4.0;
    // Radial unit vector is (0.6, 0.8); velocity 5 along it.
    s.vx = 3.0;
    s.vy = 4.0;
    Platform p{0.0, 0.0, 0.0, 0.0, 0.0};
    const auto m = observe(s, p);
    CHECK(m.r == doctest::Approx(5.0));
    CHECK(m.rdot == doctest::Approx(5.0));

    // Perpendicular velocity: zero range rate.
    s.vx = -4.0;
    s.vy = 3.0;
    CHECK(observe(s, p).rdot == doctest::Approx(0.0));
}

TEST_CASE("observe: closing platform gives negative range rate") {
    KinematicState s;
    s.y = 1000.0;
    Platform p{0.0, 0.0, 0.0, 0.0, 100.0};  // platform closing at 100 m/s
    CHECK(observe(s, p).rdot == doctest::Approx(-100.0));
}

TEST_CASE("observe: azimuth measured from the y axis") {
    KinematicState east;
    east.x = 100.0;
    Platform p{0.0, 0.0, 0.0, 0.0, 0.0};
    CHECK(observe(east, p).theta == doctest::Approx(M_PI / 2.0));
    KinematicState north;
    north.y = 100.0;
    CHECK(observe(north, p).theta == doctest::Approx(0.0));
}

TEST_CASE("converted measurement covariance at the axis angles") {
    NoiseConfig cfg;
    cfg.sigma_r = 5.0;
    cfg.sigma_theta = 2.5 * M_PI / 180.0;
    Detection d;
    d.r = 1000.0;
    d.theta = 0.0;
    d.platform = {0.0, 0.0, 0.0, 0.0, 0.0};
    auto c = convert_measurement(d, cfg);
    CHECK(c.R(0, 0) == doctest::Approx(d.r * d.r * cfg.sigma_theta * cfg.sigma_theta));
    CHECK(c.R(1, 1) == doctest::Approx(cfg.sigma_r * cfg.sigma_r));
    CHECK(c.R(0, 1) == doctest::Approx(0.0));

    d.theta = M_PI / 2.0;
    c = convert_measurement(d, cfg);
    CHECK(c.R(0, 0) == doctest::Approx(cfg.sigma_r * cfg.sigma_r));
    CHECK(c.R(1, 1) == doctest::Approx(d.r * d.r * cfg.sigma_theta * cfg.sigma_theta));

    CHECK(c.R(2, 2) == doctest::Approx(cfg.sigma_rdot * cfg.sigma_rdot));
    Detection miss;
    miss.is_miss = true;
    CHECK_THROWS_AS(convert_measurement(miss, cfg), std::invalid_argument);
}

TEST_CASE("converted covariance matches Monte Carlo at ground level") {
    NoiseConfig cfg;
    cfg.sigma_r = 5.0;
    cfg.sigma_theta = 2.5 * M_PI / 180.0;
    Detection d;
    d.r = 1000.0;
    d.theta = M_PI / 4.0;
    d.platform = {0.0, 0.0, 0.0, 0.0, 0.0};
    const auto c = convert_measurement(d, cfg);

    RandomStream rng(4242);
    const int n = 200000;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        const double r = d.r + rng.normal(0.0, cfg.sigma_r);
        const double th = d.theta + rng.normal(0.0, cfg.sigma_theta);
        const double x = r * std::sin(th), y = r * std::cos(th);
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    const double mx = sx / n, my = sy / n;
    const double vxx = sxx / n - mx * mx, vyy = syy / n - my * my, vxy = sxy / n - mx * my;
    CHECK(c.R(0, 0) == doctest::Approx(vxx).epsilon(0.02));
    CHECK(c.R(1, 1) == doctest::Approx(vyy).epsilon(0.02));
    CHECK(c.R(0, 1) == doctest::Approx(vxy).epsilon(0.05));
}

TEST_CASE("converted covariance matches Monte Carlo with platform altitude") {
    NoiseConfig cfg;
    cfg.sigma_r = 5.0;
    cfg.sigma_theta = 2.5 * M_PI / 180.0;
    Detection d;
    d.platform = {0.0, 0.0, 3000.0, 0.0, 0.0};
    d.r = std::sqrt(4000.0 * 4000.0 + 3000.0 * 3000.0);
    d.theta = M_PI / 6.0;
    const auto c = convert_measurement(d, cfg);

    RandomStream rng(77);
    const int n = 200000;
    double sx = 0, sy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < n; ++i) {
        const double r = d.r + rng.normal(0.0, cfg.sigma_r);
        const double th = d.theta + rng.normal(0.0, cfg.sigma_theta);
        const double rho = std::sqrt(r * r - 3000.0 * 3000.0);
        const double x = rho * std::sin(th), y = rho * std::cos(th);
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
    }
    const double mx = sx / n, my = sy / n;
    CHECK(c.R(0, 0) == doctest::Approx(sxx / n - mx * mx).epsilon(0.02));
    CHECK(c.R(1, 1) == doctest::Approx(syy / n - my * my).epsilon(0.02));
}

TEST_CASE("noiseless observe then convert recovers the target position") {
    NoiseConfig cfg;
    KinematicState s;
    s.x = 1234.0;
    s.y = -567.0;
    s.vx = 5.0;
    s.vy = -3.0;
    Platform p{-2000.0, -6000.0, 3000.0, 100.0, 0.0};
    const auto m = observe(s, p);
    Detection d;
    d.r = m.r;
    d.rdot = m.rdot;
    d.theta = m.theta;
    d.platform = p;
    const auto c = convert_measurement(d, cfg);
    CHECK(c.z(0) == doctest::Approx(s.x).epsilon(1e-9));
    CHECK(c.z(1) == doctest::Approx(s.y).epsilon(1e-9));
    CHECK(c.z(2) == doctest::Approx(m.rdot));
}

TEST_CASE("measurement jacobian rows and simple geometry") {
    KinematicState s;
    s.y = 1000.0;
    s.vy = 10.0;
    Platform p{0.0, 0.0, 0.0, 0.0, 0.0};
    const Mat34 j = measurement_jacobian(s, p);
    CHECK(j(0, 0) == 1.0);
    CHECK(j(0, 1) == 0.0);
    CHECK(j(0, 2) == 0.0);
    CHECK(j(0, 3) == 0.0);
    CHECK(j(1, 1) == 1.0);
    // Target due north, radial velocity: d(rdot)/d(vy) = 1, d(rdot)/d(vx) = 0.
    CHECK(j(2, 3) == doctest::Approx(1.0));
    CHECK(j(2, 2) == doctest::Approx(0.0));
}

TEST_CASE("measurement jacobian matches central finite differences") {
    RandomStream rng(31337);
    Platform p{-2000.0, -6000.0, 3000.0, 100.0, 0.0};
    const double step = 1e-4;
    for (int trial = 0; trial < 1000; ++trial) {
        KinematicState s;
        const double range = 100.0 + rng.uniform() * 9900.0;
        const double bearing = rng.uniform() * 2.0 * M_PI;
        s.x = p.x + range * std::sin(bearing);
        s.y = p.y + range * std::cos(bearing);
        s.vx = rng.normal(0.0, 15.0);
        s.vy = rng.normal(0.0, 15.0);
        const Mat34 j = measurement_jacobian(s, p);
        for (int col = 0; col < 4; ++col) {
            auto perturbed = [&](double delta) {
                KinematicState q = s;
                (col == 0 ? q.x : col == 1 ? q.y : col == 2 ? q.vx : q.vy) += delta;
                return converted_prediction(q, p);
            };
            const Vec3 fd = (perturbed(step) - perturbed(-step)) / (2.0 * step);
            for (int row = 0; row < 3; ++row) {
                const double scale = std::max({std::abs(j(row, col)), std::abs(fd(row)), 1e-3});
                CHECK(std::abs(j(row, col) - fd(row)) / scale < 1e-5);
            }
        }
    }
}

TEST_CASE("detection stream round-trips through json lines and csv") {
    Detection d;
    d.t = 7;
    d.r = 1234.5;
    d.rdot = -3.25;
    d.theta = 0.75;
    d.platform = {-2000.0, -6000.0, 3000.0, 100.0, 0.0};
    const Detection back = detection_from_json_line(detection_to_json_line(d));
    CHECK(back.t == d.t);
    CHECK(back.r == d.r);
    CHECK(back.rdot == d.rdot);
    CHECK(back.theta == d.theta);
    CHECK(back.platform.z == d.platform.z);
    CHECK_FALSE(back.is_miss);

    Detection miss;
    miss.t = 8;
    miss.is_miss = true;
    const auto csv = detections_to_csv({d, miss});
    const auto parsed = detections_from_csv(csv);
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].r == d.r);
    CHECK(parsed[1].is_miss);
}
