#include "cmac/mmd.hpp"

#include <algorithm>
#include <cmath>

#include "cmac/errors.hpp"

namespace cmac {

namespace {

constexpr double kBandwidthFloor = 1e-6;

void check_bandwidth(double h) {
    if (!(h > 0.0)) {
        throw NonPositiveBandwidth("kernel bandwidth must be positive, got " + std::to_string(h));
    }
}

} // namespace

double rbf_kernel(double x, double y, double h) {
    check_bandwidth(h);
    const double d = x - y;
    return std::exp(-d * d / (2.0 * h * h));
}

double median_heuristic_bandwidth(std::span<const double> pooled) {
    const std::size_t n = pooled.size();
    if (n < 2) return kBandwidthFloor;

    std::vector<double> dists;
    dists.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            dists.push_back(std::abs(pooled[i] - pooled[j]));
        }
    }
    std::sort(dists.begin(), dists.end());
    const std::size_t m = dists.size();
    double med = (m % 2 == 1) ? dists[m / 2]
                              : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
    return std::max(med, kBandwidthFloor);
}

double resolve_bandwidth(std::span<const double> x, std::span<const double> y,
                         const KernelConfig& cfg) {
    if (cfg.bandwidth_mode == KernelConfig::Bandwidth::fixed) {
        check_bandwidth(cfg.bandwidth);
        return cfg.bandwidth;
    }
    std::vector<double> pooled;
    pooled.reserve(x.size() + y.size());
    pooled.insert(pooled.end(), x.begin(), x.end());
    pooled.insert(pooled.end(), y.begin(), y.end());
    return median_heuristic_bandwidth(pooled);
}

double mmd2(std::span<const double> x, std::span<const double> y,
            const KernelConfig& cfg) {
    // The estimator is symmetric; canonicalizing the argument order makes
    // mmd2(X, Y) and mmd2(Y, X) bit-identical despite summation order.
    if (std::lexicographical_compare(y.begin(), y.end(), x.begin(), x.end())) {
        std::swap(x, y);
    }
    const std::size_t m = x.size();
    const std::size_t n = y.size();
    const bool unbiased = cfg.estimator == KernelConfig::Estimator::unbiased;
    if (m == 0 || n == 0) {
        throw TooFewSamples("mmd2 requires at least one sample per side");
    }
    if (unbiased && (m < 2 || n < 2)) {
        throw TooFewSamples("unbiased mmd2 requires at least two samples per side");
    }
    const double h = resolve_bandwidth(x, y, cfg);

    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (unbiased && i == j) continue;
            kxx += rbf_kernel(x[i], x[j], h);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (unbiased && i == j) continue;
            kyy += rbf_kernel(y[i], y[j], h);
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            kxy += rbf_kernel(x[i], y[j], h);
        }
    }

    const double md = static_cast<double>(m);
    const double nd = static_cast<double>(n);
    if (unbiased) {
        return kxx / (md * (md - 1.0)) + kyy / (nd * (nd - 1.0)) - 2.0 * kxy / (md * nd);
    }
    return kxx / (md * md) + kyy / (nd * nd) - 2.0 * kxy / (md * nd);
}

MmdGradient mmd2_grad(std::span<const double> x, std::span<const double> y,
                      const KernelConfig& cfg) {
    const std::size_t m = x.size();
    const std::size_t n = y.size();
    if (m == 0 || n == 0) {
        throw TooFewSamples("mmd2_grad requires at least one sample per side");
    }
    const double h = resolve_bandwidth(x, y, cfg);
    const double inv_h2 = 1.0 / (h * h);
    const double md = static_cast<double>(m);
    const double nd = static_cast<double>(n);

    // d/dx k(x, y) = -(x - y)/h^2 * k(x, y); the biased estimator's
    // within-sample term contributes twice per pair by symmetry.
    MmdGradient g;
    g.dx.assign(m, 0.0);
    g.dy.assign(n, 0.0);
    for (std::size_t p = 0; p < m; ++p) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            acc += -(x[p] - x[j]) * inv_h2 * rbf_kernel(x[p], x[j], h);
        }
        g.dx[p] += 2.0 * acc / (md * md);
        acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            acc += -(x[p] - y[j]) * inv_h2 * rbf_kernel(x[p], y[j], h);
        }
        g.dx[p] -= 2.0 * acc / (md * nd);
    }
    for (std::size_t q = 0; q < n; ++q) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            acc += -(y[q] - y[j]) * inv_h2 * rbf_kernel(y[q], y[j], h);
        }
        g.dy[q] += 2.0 * acc / (nd * nd);
        acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            acc += -(y[q] - x[i]) * inv_h2 * rbf_kernel(x[i], y[q], h);
        }
        g.dy[q] -= 2.0 * acc / (md * nd);
    }
    return g;
}

} // namespace cmac
