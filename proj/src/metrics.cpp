// SPDX-License-Identifier: Apache-2.0
#include "dmsr/metrics.hpp"

#include "dmsr/error.hpp"

#include <cmath>
#include <vector>

namespace dmsr {

namespace {

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_same_size(int aw, int ah, int bw, int bh, const char* what) {
    if (aw != bw || ah != bh) fail(ErrorKind::InvalidParameter, std::string(what) + ": image dimensions differ");
}

// Valid-mode separable correlation: output is (h - k + 1) x (w - k + 1).
template <typename Scalar>
Plane<Scalar> filter_valid(const Plane<Scalar>& in, const std::vector<Scalar>& taps) {
    const Eigen::Index k = static_cast<Eigen::Index>(taps.size());
    const Eigen::Index h = in.rows(), w = in.cols();
    Plane<Scalar> rows_pass = Plane<Scalar>::Zero(h, w - k + 1);
    for (Eigen::Index j = 0; j < k; ++j) rows_pass += taps[static_cast<std::size_t>(j)] * in.middleCols(j, w - k + 1);
    Plane<Scalar> out = Plane<Scalar>::Zero(h - k + 1, w - k + 1);
    for (Eigen::Index i = 0; i < k; ++i) out += taps[static_cast<std::size_t>(i)] * rows_pass.middleRows(i, h - k + 1);
    return out;
}

// Adjoint of filter_valid: scatters an (h-k+1) x (w-k+1) map back to h x w.
template <typename Scalar>
Plane<Scalar> filter_valid_adjoint(const Plane<Scalar>& g, const std::vector<Scalar>& taps, Eigen::Index h,
                                   Eigen::Index w) {
    const Eigen::Index k = static_cast<Eigen::Index>(taps.size());
    Plane<Scalar> rows_pass = Plane<Scalar>::Zero(h, w - k + 1);
    for (Eigen::Index i = 0; i < k; ++i) rows_pass.middleRows(i, h - k + 1) += taps[static_cast<std::size_t>(i)] * g;
    Plane<Scalar> out = Plane<Scalar>::Zero(h, w);
    for (Eigen::Index j = 0; j < k; ++j) out.middleCols(j, w - k + 1) += taps[static_cast<std::size_t>(j)] * rows_pass;
    return out;
}

template <typename Scalar>
Scalar ssim_impl(const Image<Scalar>& a, const Image<Scalar>& b, Image<Scalar>* d_a, const SsimOptions& opt) {
    require_same_size(a.width, a.height, b.width, b.height, "ssim");
    if (a.width < opt.window || a.height < opt.window) {
        fail(ErrorKind::InvalidParameter, "ssim: image smaller than the window");
    }
    std::vector<Scalar> taps;
    for (double v : gaussian_window(opt.window, opt.sigma)) taps.push_back(static_cast<Scalar>(v));
    const Scalar c1 = static_cast<Scalar>(std::pow(opt.k1 * opt.data_range, 2));
    const Scalar c2 = static_cast<Scalar>(std::pow(opt.k2 * opt.data_range, 2));
    const Eigen::Index h = a.height, w = a.width;
    const Eigen::Index valid = (h - opt.window + 1) * (w - opt.window + 1);
    const Scalar norm = Scalar(1) / static_cast<Scalar>(3 * valid);

    if (d_a) *d_a = Image<Scalar>(a.width, a.height);
    Scalar total = 0;
    for (int c = 0; c < 3; ++c) {
        const Plane<Scalar> x = a.channel(c), y = b.channel(c);
        const Plane<Scalar> mx = filter_valid(x, taps), my = filter_valid(y, taps);
        const Plane<Scalar> exx = filter_valid<Scalar>(x * x, taps), eyy = filter_valid<Scalar>(y * y, taps);
        const Plane<Scalar> exy = filter_valid<Scalar>(x * y, taps);
        const Plane<Scalar> a1 = Scalar(2) * mx * my + c1;
        const Plane<Scalar> a2 = Scalar(2) * (exy - mx * my) + c2;
        const Plane<Scalar> b1 = mx * mx + my * my + c1;
        const Plane<Scalar> b2 = (exx - mx * mx) + (eyy - my * my) + c2;
        const Plane<Scalar> s = (a1 * a2) / (b1 * b2);
        total += s.sum();
        if (!d_a) continue;

        // Partials of s w.r.t. the independent filtered moments mx, E[x^2], E[xy].
        const Plane<Scalar> g_mx = norm * s * (Scalar(2) * my / a1 - Scalar(2) * my / a2 - Scalar(2) * mx / b1 +
                                              Scalar(2) * mx / b2);
        const Plane<Scalar> g_exx = -norm * s / b2;
        const Plane<Scalar> g_exy = norm * Scalar(2) * s / a2;
        const Plane<Scalar> grad = filter_valid_adjoint(g_mx, taps, h, w) +
                                   Scalar(2) * x * filter_valid_adjoint(g_exx, taps, h, w) +
                                   y * filter_valid_adjoint(g_exy, taps, h, w);
        for (Eigen::Index yy = 0; yy < h; ++yy)
            for (Eigen::Index xx = 0; xx < w; ++xx) d_a->pixels(yy * w + xx, c) = grad(yy, xx);
    }
    return total * norm;
}

}  // namespace

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> taps(static_cast<std::size_t>(size));
    const double center = (size - 1) / 2.0;
    double sum = 0;
    for (int i = 0; i < size; ++i) {
        const double d = i - center;
        taps[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += taps[static_cast<std::size_t>(i)];
    }
    for (auto& t : taps) t /= sum;
    return taps;
}

template <typename Scalar>
double psnr(const Image<Scalar>& a, const Image<Scalar>& b) {
    require_same_size(a.width, a.height, b.width, b.height, "psnr");
    const double mse = (a.pixels.template cast<double>() - b.pixels.template cast<double>()).square().mean();
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

template <typename Scalar>
Scalar ssim(const Image<Scalar>& a, const Image<Scalar>& b, const SsimOptions& options) {
    return ssim_impl<Scalar>(a, b, nullptr, options);
}

template <typename Scalar>
Scalar ssim_with_grad(const Image<Scalar>& a, const Image<Scalar>& b, Image<Scalar>& d_a,
                      const SsimOptions& options) {
    return ssim_impl<Scalar>(a, b, &d_a, options);
}

template double psnr(const Image<float>&, const Image<float>&);
template double psnr(const Image<double>&, const Image<double>&);
template float ssim(const Image<float>&, const Image<float>&, const SsimOptions&);
template double ssim(const Image<double>&, const Image<double>&, const SsimOptions&);
template float ssim_with_grad(const Image<float>&, const Image<float>&, Image<float>&, const SsimOptions&);
template double ssim_with_grad(const Image<double>&, const Image<double>&, Image<double>&, const SsimOptions&);

}  // namespace dmsr
