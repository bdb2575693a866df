// SPDX-License-Identifier: Apache-2.0
#include "dmsr/gaussian.hpp"

#include "test_util.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace dmsr {
namespace {

using test::random_quat;
using test::uniform3;

TEST(Covariance, IdentityQuaternionUnitScale) {
    const Mat3<double> cov = build_covariance<double>({1, 0, 0, 0}, Vec3<double>::Zero());
    EXPECT_TRUE(cov.isApprox(Mat3<double>::Identity(), 1e-15));
}

TEST(Covariance, AxisScale) {
    const Mat3<double> cov = build_covariance<double>({1, 0, 0, 0}, {std::log(2.0), 0, 0});
    EXPECT_NEAR((cov - Vec3<double>(4, 1, 1).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 0, 1e-12);
}

TEST(Covariance, QuarterTurnAboutZ) {
    const double h = std::sqrt(0.5);
    const Mat3<double> cov = build_covariance<double>({h, 0, 0, h}, {std::log(2.0), 0, 0});
    // Independent composition: R = Rz(90deg), S^2 = diag(4, 1, 1).
    Mat3<double> r;
    r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const Mat3<double> expected = r * Vec3<double>(4, 1, 1).asDiagonal() * r.transpose();
    EXPECT_NEAR((cov - expected).cwiseAbs().maxCoeff(), 0, 1e-12);
    EXPECT_NEAR((cov - Vec3<double>(1, 4, 1).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 0, 1e-12);
}

TEST(Covariance, SignFlipAndSpectrum) {
    Rng rng(11);
    for (int k = 0; k < 50; ++k) {
        const Vec4<double> q = random_quat(rng);
        const Vec3<double> ls = uniform3(rng, -3, 1);
        const Mat3<double> a = build_covariance(q, ls);
        const Mat3<double> b = build_covariance<double>(-q, ls);
        EXPECT_NEAR((a - b).cwiseAbs().maxCoeff(), 0, 1e-12);
        EXPECT_NEAR((a - a.transpose()).cwiseAbs().maxCoeff(), 0, 1e-12 * a.norm());
        Eigen::SelfAdjointEigenSolver<Mat3<double>> es(a);
        std::array<double, 3> got{es.eigenvalues()[0], es.eigenvalues()[1], es.eigenvalues()[2]};
        std::array<double, 3> want{std::exp(2 * ls[0]), std::exp(2 * ls[1]), std::exp(2 * ls[2])};
        std::sort(want.begin(), want.end());
        for (int i = 0; i < 3; ++i) EXPECT_NEAR(got[i], want[i], 1e-9);
    }
}

TEST(Covariance, NonFiniteInputThrows) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(build_covariance<double>({nan, 0, 0, 0}, Vec3<double>::Zero()), Error);
    EXPECT_THROW(build_covariance<double>({1, 0, 0, 0}, {0, nan, 0}), Error);
}

TEST(Density, Examples) {
    EXPECT_DOUBLE_EQ(gaussian_density<double>({1, 2, 3}, {1, 2, 3}, Mat3<double>::Identity() * 0.3), 1.0);
    EXPECT_NEAR(gaussian_density<double>({1, 0, 0}, Vec3<double>::Zero(), Mat3<double>::Identity()), std::exp(-0.5),
                1e-15);
    const Mat3<double> cov = Vec3<double>(4, 1, 1).asDiagonal();
    EXPECT_NEAR(gaussian_density<double>({1, 1, 0}, Vec3<double>::Zero(), cov), std::exp(-0.625), 1e-15);
}

TEST(Density, MonotoneAlongRays) {
    Rng rng(3);
    const Mat3<double> cov = build_covariance(random_quat(rng), uniform3(rng, -1, 0.5));
    const Vec3<double> mean = uniform3(rng, -1, 1);
    for (int k = 0; k < 20; ++k) {
        const Vec3<double> dir = uniform3(rng, -1, 1).normalized();
        double prev = 1.0;
        for (int s = 1; s < 30; ++s) {
            const double g = gaussian_density<double>(mean + 0.1 * s * dir, mean, cov);
            EXPECT_LT(g, prev);
            prev = g;
        }
    }
}

TEST(Density, SingularCovarianceThrows) {
    Mat3<double> cov = Mat3<double>::Zero();
    cov(0, 0) = 1;
    try {
        gaussian_density<double>({0.1, 0, 0}, Vec3<double>::Zero(), cov);
        FAIL() << "expected SingularMatrix";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SingularMatrix);
    }
    EXPECT_NO_THROW(gaussian_density<double>({0.1, 0, 0}, Vec3<double>::Zero(), regularize_covariance(cov)));
}

TEST(ShColor, DegreeZeroIsIsotropic) {
    ShBlock<double> c = ShBlock<double>::Zero();
    c.row(0) << 0.3, -0.2, 0.9;
    Rng rng(5);
    const Vec3<double> first = eval_sh_color<double>(c, {0, 0, 1}, 0);
    for (int k = 0; k < 10; ++k) {
        const Vec3<double> dir = uniform3(rng, -1, 1).normalized();
        EXPECT_EQ(eval_sh_color(c, dir, 0), first);
    }
    EXPECT_NEAR(first[0], 0.5 + 0.3 * 0.28209479177387814, 1e-15);
}

TEST(ShColor, OddParityOfBandOne) {
    ShBlock<double> c = ShBlock<double>::Zero();
    c.row(2) << 0.2, 0.2, 0.2;  // z band
    const Vec3<double> up = eval_sh_color<double>(c, {0, 0, 1}, 1);
    const Vec3<double> down = eval_sh_color<double>(c, {0, 0, -1}, 1);
    EXPECT_NEAR(up[0] - 0.5, -(down[0] - 0.5), 1e-15);
    EXPECT_GT(up[0], 0.5);
}

TEST(ShColor, MatchesPolynomialBasis) {
    Rng rng(8);
    for (int k = 0; k < 100; ++k) {
        ShBlock<double> c;
        for (int i = 0; i < 12; ++i) c.data()[i] = rng.uniform(-0.2, 0.2);
        const Vec3<double> d = uniform3(rng, -1, 1).normalized();
        // Real SH table: Y00 = 1/(2 sqrt(pi)), Y1m = sqrt(3/(4 pi)) * (-y, z, -x).
        const double y00 = 0.5 / std::sqrt(M_PI), y1 = std::sqrt(3.0 / (4.0 * M_PI));
        const Vec3<double> want = (0.5 + y00 * c.row(0).array() - y1 * d.y() * c.row(1).array() +
                                   y1 * d.z() * c.row(2).array() - y1 * d.x() * c.row(3).array())
                                      .matrix()
                                      .transpose();
        EXPECT_NEAR((eval_sh_color(c, d, 1) - want.cwiseMax(0.0)).cwiseAbs().maxCoeff(), 0, 1e-12);
    }
}

TEST(ShColor, UnsupportedDegree) {
    EXPECT_THROW(eval_sh_color<double>(ShBlock<double>::Zero(), {0, 0, 1}, 2), Error);
}

TEST(Cloud, CompactAndConsistency) {
    GaussianCloud<float> cloud;
    for (int i = 0; i < 4; ++i)
        cloud.push_back(Vec3<float>::Constant(static_cast<float>(i)), {1, 0, 0, 0}, Vec3<float>::Zero(), 0.f,
                        ShBlock<float>::Zero());
    const bool keep[4] = {true, false, true, false};
    cloud.compact(keep);
    ASSERT_EQ(cloud.size(), 2u);
    EXPECT_EQ(cloud.positions[1].x(), 2.f);
    cloud.opacity_logits.pop_back();
    EXPECT_THROW(cloud.check_consistent(), Error);
}

TEST(Cloud, NormalizeRotations) {
    GaussianCloud<float> cloud;
    cloud.push_back(Vec3<float>::Zero(), {2, 0, 1, 0}, Vec3<float>::Zero(), 0.f, ShBlock<float>::Zero());
    cloud.normalize_rotations();
    EXPECT_NEAR(cloud.rotations[0].norm(), 1.f, 1e-6f);
}

}  // namespace
}  // namespace dmsr
