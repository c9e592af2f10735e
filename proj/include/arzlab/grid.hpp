#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace arzlab {

/// Nodal samples of a scalar function on the uniform grid x_i = i*h, i = 0..N.
struct Field {
    std::vector<double> data;
    double h = 0.0;

    Field() = default;
    Field(std::size_t nodes, double spacing, double fill = 0.0)
        : data(nodes, fill), h(spacing) {}

    [[nodiscard]] std::size_t nodes() const { return data.size(); }
    [[nodiscard]] int cells() const { return static_cast<int>(data.size()) - 1; }
    [[nodiscard]] double length() const { return h * cells(); }
    [[nodiscard]] double x(std::size_t i) const { return h * static_cast<double>(i); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
};

inline Field make_field(int n_cells, double length, double fill = 0.0) {
    if (n_cells < 1) throw std::invalid_argument("grid needs at least one cell");
    return Field(static_cast<std::size_t>(n_cells) + 1, length / n_cells, fill);
}

inline Field sample_function(const std::function<double(double)>& f, int n_cells, double length) {
    Field out = make_field(n_cells, length);
    for (std::size_t i = 0; i < out.nodes(); ++i) out.data[i] = f(out.x(i));
    return out;
}

inline void require_same_grid(const Field& a, const Field& b) {
    if (a.nodes() != b.nodes() || a.h != b.h)
        throw std::invalid_argument("fields sampled on different grids");
}

/// Composite trapezoid of nodal samples over the whole grid.
inline double trapz(const std::vector<double>& f, double h) {
    const std::size_t n = f.size();
    if (n < 2) return 0.0;
    double s = 0.5 * (f.front() + f.back());
    for (std::size_t i = 1; i + 1 < n; ++i) s += f[i];
    return s * h;
}

inline double trapz(const Field& f) { return trapz(f.data, f.h); }

/// Trapezoid of f*g over node range [i0, i1] of a shared grid.
inline double trapz_product(const std::vector<double>& f, const std::vector<double>& g,
                            double h, std::size_t i0, std::size_t i1) {
    if (i1 <= i0) return 0.0;
    double s = 0.5 * (f[i0] * g[i0] + f[i1] * g[i1]);
    for (std::size_t i = i0 + 1; i < i1; ++i) s += f[i] * g[i];
    return s * h;
}

/// Linear interpolation of nodal samples at x, clamped to [0, L].
inline double lerp(const std::vector<double>& f, double h, double x) {
    if (f.empty()) return 0.0;
    const double last = h * static_cast<double>(f.size() - 1);
    if (x <= 0.0) return f.front();
    if (x >= last) return f.back();
    const double t = x / h;
    const auto i = static_cast<std::size_t>(t);
    const double w = t - static_cast<double>(i);
    return (1.0 - w) * f[i] + w * f[i + 1];
}

inline double lerp(const Field& f, double x) { return lerp(f.data, f.h, x); }

/// Trapezoid of an integrand callable over [a, b] with n subintervals.
inline double trapz_fn(const std::function<double(double)>& f, double a, double b, int n) {
    if (b <= a || n < 1) return 0.0;
    const double dx = (b - a) / n;
    double s = 0.5 * (f(a) + f(b));
    for (int i = 1; i < n; ++i) s += f(a + dx * i);
    return s * dx;
}

/// Subinterval count that resolves a span at roughly the grid resolution h.
inline int quad_intervals(double span, double h) {
    if (span <= 0.0) return 0;
    return std::max(1, static_cast<int>(std::ceil(span / h - 1e-12)));
}

inline double max_abs(const std::vector<double>& f) {
    double m = 0.0;
    for (double v : f) m = std::max(m, std::abs(v));
    return m;
}

inline double max_abs(const Field& f) { return max_abs(f.data); }

inline bool all_finite(const std::vector<double>& f) {
    for (double v : f)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace arzlab
