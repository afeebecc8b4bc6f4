#include "gaf/metrics.hpp"

#include <array>
#include <cmath>

namespace gaf {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& window_1d()
{
    static const std::array<double, kWindow> w = [] {
        std::array<double, kWindow> out{};
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - kWindow / 2;
            out[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
            sum += out[i];
        }
        for (auto& v : out) v /= sum;
        return out;
    }();
    return w;
}

using Plane = std::vector<double>;

// Separable Gaussian filter with zero padding.
Plane filter(const Plane& in, int w, int h)
{
    const auto& k = window_1d();
    constexpr int r = kWindow / 2;
    Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int xx = x + i;
                if (xx >= 0 && xx < w) s += k[i + r] * in[std::size_t(y) * w + xx];
            }
            tmp[std::size_t(y) * w + x] = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int yy = y + i;
                if (yy >= 0 && yy < h) s += k[i + r] * tmp[std::size_t(yy) * w + x];
            }
            out[std::size_t(y) * w + x] = s;
        }
    }
    return out;
}

Plane channel(const Image& img, int c)
{
    Plane p(std::size_t(img.width) * img.height);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * 3 + c];
    return p;
}

void check_shapes(const Image& a, const Image& b)
{
    if (!a.same_shape(b)) throw DimensionError("image dimensions differ");
    if (a.data.empty()) throw DimensionError("empty image");
}

SsimWithGradient ssim_impl(const Image& a, const Image& b, bool want_gradient)
{
    check_shapes(a, b);
    const int w = a.width, h = a.height;
    const std::size_t n = std::size_t(w) * h;
    const double inv_count = 1.0 / double(n * 3);

    SsimWithGradient out;
    if (want_gradient) out.d_first.assign(a.data.size(), 0.0);
    if (a.data == b.data) {
        // stationary point: the gradient is exactly zero
        out.value = 1.0;
        return out;
    }
    double total = 0.0;

    for (int c = 0; c < 3; ++c) {
        const Plane x = channel(a, c);
        const Plane y = channel(b, c);
        Plane xx(n), yy(n), xy(n);
        for (std::size_t i = 0; i < n; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const Plane mx = filter(x, w, h), my = filter(y, w, h);
        const Plane exx = filter(xx, w, h), eyy = filter(yy, w, h), exy = filter(xy, w, h);

        Plane ga, gb, gc;
        if (want_gradient) {
            ga.resize(n);
            gb.resize(n);
            gc.resize(n);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double vx = exx[i] - mx[i] * mx[i];
            const double vy = eyy[i] - my[i] * my[i];
            const double cxy = exy[i] - mx[i] * my[i];
            const double a1 = 2.0 * mx[i] * my[i] + kC1;
            const double a2 = 2.0 * cxy + kC2;
            const double b1 = mx[i] * mx[i] + my[i] * my[i] + kC1;
            const double b2 = vx + vy + kC2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            if (want_gradient) {
                const double d_mu = 2.0 * my[i] * a2 / (b1 * b2) - s * 2.0 * mx[i] / b1;
                const double d_var = -s / b2;
                const double d_cov = 2.0 * a1 / (b1 * b2);
                ga[i] = d_mu - 2.0 * mx[i] * d_var - my[i] * d_cov;
                gb[i] = d_var;
                gc[i] = d_cov;
            }
        }
        if (want_gradient) {
            const Plane fa = filter(ga, w, h), fb = filter(gb, w, h), fc = filter(gc, w, h);
            for (std::size_t i = 0; i < n; ++i) {
                out.d_first[i * 3 + c] = (fa[i] + 2.0 * x[i] * fb[i] + y[i] * fc[i]) * inv_count;
            }
        }
    }
    out.value = total * inv_count;
    return out;
}

}  // namespace

double compute_mse(const Image& a, const Image& b)
{
    check_shapes(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / double(a.data.size());
}

double compute_psnr(const Image& a, const Image& b)
{
    const double mse = compute_mse(a, b);
    if (mse < 1e-10) return 100.0;
    return -10.0 * std::log10(mse);
}

double compute_ssim(const Image& a, const Image& b) { return ssim_impl(a, b, false).value; }

SsimWithGradient compute_ssim_with_gradient(const Image& a, const Image& b) { return ssim_impl(a, b, true); }

}  // namespace gaf
