#pragma once

// Level-set evolution: regularized Heaviside/delta pair, staggered
// curvature stencil with replicate (zero-flux) boundaries, explicit Euler
// ascent steps on the region-likelihood energy, and the exact discrete
// energy/gradient pair used by the consistency checks.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "asocem/image.hpp"

namespace asocem {

using LevelSet = Image2D<double>;

// phi is clamped to this band after every step; only the sign pattern is
// meaningful, the clamp just bounds drift.
inline constexpr double kPhiClamp = 100.0;

struct SolverParams {
    double alpha = 1.0;            // boundary-length weight
    double beta = 0.1;             // area weight
    double a = 1.0;                // Heaviside/delta regularization width
    double dt = 1.0;               // explicit Euler step
    double eps_curv = 1e-8;        // gradient-magnitude floor
    int inner_steps = 100;         // PDE steps per outer iteration
    double sign_change_tol = 1e-4; // convergence threshold on sign flips
    int max_outer_iters = 100;

    void validate() const {
        if (alpha < 0 || beta < 0 || a <= 0 || dt <= 0 || eps_curv <= 0 || inner_steps < 0 ||
            sign_change_tol < 0 || sign_change_tol >= 1 || max_outer_iters < 1)
            throw std::invalid_argument("SolverParams: invalid field");
    }
};

// Spherical-cap initialization on unit-square coordinates: pixel centers at
// ((c+0.5)/width, (r+0.5)/height), value 0.25 - ((x-0.5)^2 + (y-0.5)^2).
// The zero level set is the circle of radius 0.5 around the center.
inline LevelSet init_phi(int height, int width) {
    if (height < 2 || width < 2)
        throw std::invalid_argument("init_phi: dimensions must be >= 2");
    LevelSet phi(height, width);
    for (int r = 0; r < height; ++r) {
        const double y = (r + 0.5) / height;
        for (int c = 0; c < width; ++c) {
            const double x = (c + 0.5) / width;
            phi(r, c) = 0.25 - ((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5));
        }
    }
    return phi;
}

// H_a(z) = 1/2 (1 + 2/pi arctan(z/a)); smooth step with H_a(0) = 1/2.
inline double heaviside_reg(double z, double a) {
    return 0.5 * (1.0 + (2.0 / std::numbers::pi) * std::atan(z / a));
}

// delta_a(z) = a / (pi (a^2 + z^2)); the derivative of H_a.
inline double delta_reg(double z, double a) {
    return a / (std::numbers::pi * (a * a + z * z));
}

// d/dz delta_a(z); used by the exact discrete energy gradient.
inline double delta_reg_deriv(double z, double a) {
    const double q = a * a + z * z;
    return -2.0 * a * z / (std::numbers::pi * q * q);
}

// div(grad phi / |grad phi|) with the staggered half-point scheme: forward
// differences normalized by sqrt(eps^2 + fwd^2 + central^2), then backward
// differences of the normalized fluxes. Replicate padding makes the flux
// through the domain boundary vanish (zero normal derivative).
inline Image2D<double> curvature_div(const Image2D<double>& phi, double eps_curv) {
    const int h = phi.height(), w = phi.width();
    const double e2 = eps_curv * eps_curv;
    Image2D<double> fx(h, w), fy(h, w), out(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double here = phi(r, c);
            const double dxp = phi.at_clamped(r, c + 1) - here;
            const double dyc = 0.5 * (phi.at_clamped(r + 1, c) - phi.at_clamped(r - 1, c));
            fx(r, c) = dxp / std::sqrt(e2 + dxp * dxp + dyc * dyc);
            const double dyp = phi.at_clamped(r + 1, c) - here;
            const double dxc = 0.5 * (phi.at_clamped(r, c + 1) - phi.at_clamped(r, c - 1));
            fy(r, c) = dyp / std::sqrt(e2 + dyp * dyp + dxc * dxc);
        }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double fxm = c > 0 ? fx(r, c - 1) : 0.0;
            const double fym = r > 0 ? fy(r - 1, c) : 0.0;
            out(r, c) = fx(r, c) - fxm + fy(r, c) - fym;
        }
    return out;
}

// One explicit Euler ascent step:
//   phi <- clamp(phi + dt * delta_a(phi) * (alpha * kappa - beta + ratio)),
// with kappa the staggered-scheme curvature of curvature_div. The positive
// curvature sign is the one that contracts boundary length under ascent;
// see the energy-consistency tests. Fused single pass: the normalized
// fluxes are built row by row so the whole step runs in one sweep with two
// scratch rows.
inline void evolve_step_into(const LevelSet& phi, const Image2D<double>& pixel_log_ratio,
                             const SolverParams& params, LevelSet& out,
                             std::vector<double>& fx_row, std::vector<double>& fy_prev,
                             std::vector<double>& fy_row) {
    if (!phi.same_shape(pixel_log_ratio))
        throw std::invalid_argument("evolve_step: shape mismatch");
    const int h = phi.height(), w = phi.width();
    if (!out.same_shape(phi))
        out = LevelSet(h, w);
    fx_row.assign(w, 0.0);
    fy_prev.assign(w, 0.0);   // zero boundary flux below row 0
    fy_row.assign(w, 0.0);

    const double e2 = params.eps_curv * params.eps_curv;
    const double inv_pi = 1.0 / std::numbers::pi;
    const double a = params.a, a2 = a * a;
    double rate_mass = 0.0;

    for (int r = 0; r < h; ++r) {
        const double* row = &phi(r, 0);
        const double* up = &phi(r > 0 ? r - 1 : 0, 0);
        const double* down = &phi(r + 1 < h ? r + 1 : h - 1, 0);

        auto flux = [&](int c, int cl, int cr) {
            const double here = row[c];
            const double dxp = row[cr] - here;
            const double dyc = 0.5 * (down[c] - up[c]);
            fx_row[c] = dxp / std::sqrt(e2 + dxp * dxp + dyc * dyc);
            const double dyp = down[c] - here;
            const double dxc = 0.5 * (row[cr] - row[cl]);
            fy_row[c] = dyp / std::sqrt(e2 + dyp * dyp + dxc * dxc);
        };
        flux(0, 0, w > 1 ? 1 : 0);
        for (int c = 1; c + 1 < w; ++c)
            flux(c, c - 1, c + 1);
        if (w > 1)
            flux(w - 1, w - 2, w - 1);

        const double* ratio = &pixel_log_ratio(r, 0);
        double* dst = &out(r, 0);
        for (int c = 0; c < w; ++c) {
            const double fxm = c > 0 ? fx_row[c - 1] : 0.0;
            const double kappa = fx_row[c] - fxm + fy_row[c] - fy_prev[c];
            const double z = row[c];
            const double delta = a * inv_pi / (a2 + z * z);
            const double rate = delta * (params.alpha * kappa - params.beta + ratio[c]);
            rate_mass += std::abs(rate);
            const double v = z + params.dt * rate;
            dst[c] = v < -kPhiClamp ? -kPhiClamp : (v > kPhiClamp ? kPhiClamp : v);
        }
        std::swap(fy_prev, fy_row);
    }
    if (!std::isfinite(rate_mass))
        throw std::runtime_error("evolve_step: non-finite level set update (dt too large?)");
}

inline LevelSet evolve_step(const LevelSet& phi, const Image2D<double>& pixel_log_ratio,
                            const SolverParams& params) {
    LevelSet out;
    std::vector<double> fx, fyp, fy;
    evolve_step_into(phi, pixel_log_ratio, params, out, fx, fyp, fy);
    return out;
}

// Runs up to params.inner_steps Euler steps, stopping early once the
// fraction of pixels whose sign flipped in a step drops below
// params.sign_change_tol. Returns the final field and the step count.
inline std::pair<LevelSet, int> run_evolution(LevelSet phi, const Image2D<double>& pixel_log_ratio,
                                              const SolverParams& params) {
    int steps = 0;
    const double npix = static_cast<double>(phi.size());
    LevelSet next;
    std::vector<double> fx, fyp, fy;
    for (int s = 0; s < params.inner_steps; ++s) {
        evolve_step_into(phi, pixel_log_ratio, params, next, fx, fyp, fy);
        std::size_t flipped = 0;
        for (std::size_t i = 0; i < phi.size(); ++i)
            if ((phi.data()[i] > 0.0) != (next.data()[i] > 0.0))
                ++flipped;
        std::swap(phi, next);
        ++steps;
        if (static_cast<double>(flipped) / npix < params.sign_change_tol)
            break;
    }
    return {std::move(phi), steps};
}

namespace detail {

// Forward-difference gradient magnitude sqrt(gx^2 + gy^2 + eps^2) with
// replicate padding (zero difference past the last row/column). The energy
// and its exact gradient must share this discretization.
inline void forward_gradients(const Image2D<double>& phi, double eps_curv,
                              Image2D<double>& gx, Image2D<double>& gy, Image2D<double>& norm) {
    const int h = phi.height(), w = phi.width();
    const double e2 = eps_curv * eps_curv;
    gx = Image2D<double>(h, w);
    gy = Image2D<double>(h, w);
    norm = Image2D<double>(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double dx = c + 1 < w ? phi(r, c + 1) - phi(r, c) : 0.0;
            const double dy = r + 1 < h ? phi(r + 1, c) - phi(r, c) : 0.0;
            gx(r, c) = dx;
            gy(r, c) = dy;
            norm(r, c) = std::sqrt(e2 + dx * dx + dy * dy);
        }
}

}  // namespace detail

// Sum over pixels of delta_a(phi) |grad phi|: the regularized boundary
// length of {phi > 0} in pixel units.
inline double discrete_boundary_length(const Image2D<double>& phi, double a, double eps_curv) {
    Image2D<double> gx, gy, norm;
    detail::forward_gradients(phi, eps_curv, gx, gy, norm);
    double acc = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i)
        acc += delta_reg(phi.data()[i], a) * norm.data()[i];
    return acc;
}

// Discretized objective (unit pixel measure):
//   F = sum lam0 H_a(phi) + lam1 (1 - H_a(phi)) - beta H_a(phi)
//       - alpha delta_a(phi) |grad phi|.
// lam0/lam1 are the per-pixel log-density fields of the two region models.
inline double discrete_energy(const Image2D<double>& phi, const Image2D<double>& lam0,
                              const Image2D<double>& lam1, const SolverParams& params) {
    if (!phi.same_shape(lam0) || !phi.same_shape(lam1))
        throw std::invalid_argument("discrete_energy: shape mismatch");
    Image2D<double> gx, gy, norm;
    detail::forward_gradients(phi, params.eps_curv, gx, gy, norm);
    double acc = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const double hv = heaviside_reg(phi.data()[i], params.a);
        acc += lam0.data()[i] * hv + lam1.data()[i] * (1.0 - hv) - params.beta * hv -
               params.alpha * delta_reg(phi.data()[i], params.a) * norm.data()[i];
    }
    return acc;
}

// Exact per-pixel derivative of discrete_energy. The data and area terms
// reduce to delta_a(phi) (lam0 - lam1 - beta); the length term carries the
// delta_a'(phi)|grad phi| chain contribution plus the adjoint (backward
// difference) coupling of the normalized forward gradients.
inline Image2D<double> energy_gradient(const Image2D<double>& phi, const Image2D<double>& lam0,
                                       const Image2D<double>& lam1, const SolverParams& params) {
    if (!phi.same_shape(lam0) || !phi.same_shape(lam1))
        throw std::invalid_argument("energy_gradient: shape mismatch");
    const int h = phi.height(), w = phi.width();
    Image2D<double> gx, gy, norm;
    detail::forward_gradients(phi, params.eps_curv, gx, gy, norm);
    Image2D<double> grad(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double z = phi(r, c);
            const double da = delta_reg(z, params.a);
            double g = da * (lam0(r, c) - lam1(r, c) - params.beta);

            double length_term = delta_reg_deriv(z, params.a) * norm(r, c);
            length_term += da * (-gx(r, c) - gy(r, c)) / norm(r, c);
            if (c > 0)
                length_term += delta_reg(phi(r, c - 1), params.a) * gx(r, c - 1) / norm(r, c - 1);
            if (r > 0)
                length_term += delta_reg(phi(r - 1, c), params.a) * gy(r - 1, c) / norm(r - 1, c);
            g -= params.alpha * length_term;
            grad(r, c) = g;
        }
    return grad;
}

}  // namespace asocem
