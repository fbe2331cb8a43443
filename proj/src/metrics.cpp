#include "reorm/metrics.hpp"

#include "reorm/error.hpp"

#include <cmath>
#include <vector>

namespace reorm {

double psnr(const Image& a, const Image& b) {
    if (!a.same_size(b)) raise(Errc::dimension_mismatch, "psnr: image dimensions differ");
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        double d = double(a.data()[i]) - double(b.data()[i]);
        sum_sq += d * d;
    }
    double mse = sum_sq / double(a.data().size());
    if (mse == 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(255.0 * 255.0 / mse));
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_kernel() {
    std::vector<double> k(kWindow);
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        double d = i - (kWindow - 1) / 2.0;
        k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

std::vector<double> luma_plane(const Image& img) {
    std::vector<double> y(std::size_t(img.width()) * img.height());
    const auto& d = img.data();
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = 0.299 * d[i * 3] + 0.587 * d[i * 3 + 1] + 0.114 * d[i * 3 + 2];
    }
    return y;
}

// Separable Gaussian filter, valid region only.
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h,
                                 const std::vector<double>& k, int& out_w, int& out_h) {
    int half = kWindow / 2;
    out_w = w - 2 * half;
    out_h = h - 2 * half;
    std::vector<double> tmp(std::size_t(out_w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWindow; ++i) acc += k[i] * src[std::size_t(y) * w + x + i];
            tmp[std::size_t(y) * out_w + x] = acc;
        }
    }
    std::vector<double> out(std::size_t(out_w) * out_h);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWindow; ++i) acc += k[i] * tmp[std::size_t(y + i) * out_w + x];
            out[std::size_t(y) * out_w + x] = acc;
        }
    }
    return out;
}

std::vector<double> hadamard(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

} // namespace

double ssim(const Image& a, const Image& b) {
    if (!a.same_size(b)) raise(Errc::dimension_mismatch, "ssim: image dimensions differ");
    if (a.width() < kWindow || a.height() < kWindow)
        raise(Errc::invalid_argument, "ssim: images must be at least 11x11");

    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);

    auto k = gaussian_kernel();
    auto ya = luma_plane(a);
    auto yb = luma_plane(b);
    int w = a.width(), h = a.height(), vw = 0, vh = 0;

    auto mu_a = filter_valid(ya, w, h, k, vw, vh);
    auto mu_b = filter_valid(yb, w, h, k, vw, vh);
    auto aa = filter_valid(hadamard(ya, ya), w, h, k, vw, vh);
    auto bb = filter_valid(hadamard(yb, yb), w, h, k, vw, vh);
    auto ab = filter_valid(hadamard(ya, yb), w, h, k, vw, vh);

    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        double ma = mu_a[i], mb = mu_b[i];
        double va = aa[i] - ma * ma;
        double vb = bb[i] - mb * mb;
        double cov = ab[i] - ma * mb;
        double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
    }
    return total / double(mu_a.size());
}

double embed_cosine(std::span<const double> e1, std::span<const double> e2) {
    if (e1.size() != e2.size() || e1.empty())
        raise(Errc::invalid_argument, "embed_cosine: vectors must have equal nonzero length");
    double dot = 0.0, n1 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < e1.size(); ++i) {
        dot += e1[i] * e2[i];
        n1 += e1[i] * e1[i];
        n2 += e2[i] * e2[i];
    }
    if (n1 == 0.0 || n2 == 0.0)
        raise(Errc::invalid_argument, "embed_cosine: zero vector");
    return dot / (std::sqrt(n1) * std::sqrt(n2));
}

double pair_score(const Image& a, const Image& b, PairScorer& provider) {
    double v = provider.score_pair(a, b);
    if (!(v >= 0.0))
        raise(Errc::format_error, "pair score provider returned a negative or NaN value");
    return v;
}

} // namespace reorm
