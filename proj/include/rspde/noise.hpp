#pragma once

#include "rspde/error.hpp"
#include "rspde/grid.hpp"

#include <cstdint>
#include <fstream>
#include <random>
#include <string>

namespace rspde {

/// Increments of J independent Brownian motions on a uniform time grid.
/// Row j, column k holds B^j(t_{k+1}) - B^j(t_k).
template <typename Scalar>
struct NoisePath {
    int modes = 0;
    Scalar dt = Scalar(0);
    std::uint64_t seed = 0;
    MatrixX<Scalar> increments;

    Eigen::Index steps() const { return increments.cols(); }
};

/// SplitMix64 finalizer; decorrelates the per-mode seeds derived from one run seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed of the independent stream for mode j.
constexpr std::uint64_t mode_seed(std::uint64_t seed, int mode) {
    return splitmix64(splitmix64(seed) ^ splitmix64(0xA5A5A5A5ull + static_cast<std::uint64_t>(mode)));
}

/// Draws N(0, dt) increments. Each mode owns its own generator and consumes
/// it step by step, so a shorter path is a prefix of a longer one with the
/// same seed.
template <typename Scalar>
NoisePath<Scalar> sample_noise(int modes, Scalar dt, Eigen::Index steps, std::uint64_t seed) {
    if (modes < 1) throw ConfigurationError("noise needs at least one mode");
    if (!(dt > Scalar(0))) throw ConfigurationError("noise time step must be positive");
    NoisePath<Scalar> w;
    w.modes = modes;
    w.dt = dt;
    w.seed = seed;
    w.increments.resize(modes, steps);
    const double sd = std::sqrt(static_cast<double>(dt));
    for (int j = 0; j < modes; ++j) {
        std::mt19937_64 gen(mode_seed(seed, j));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index k = 0; k < steps; ++k) w.increments(j, k) = static_cast<Scalar>(sd * normal(gen));
    }
    return w;
}

/// Zero increments (deterministic runs).
template <typename Scalar>
NoisePath<Scalar> zero_noise(int modes, Scalar dt, Eigen::Index steps) {
    NoisePath<Scalar> w;
    w.modes = modes;
    w.dt = dt;
    w.increments = MatrixX<Scalar>::Zero(modes, steps);
    return w;
}

/// Same Brownian paths on a grid `factor` times coarser.
template <typename Scalar>
NoisePath<Scalar> coarsen(const NoisePath<Scalar>& w, int factor) {
    if (factor < 1 || w.steps() % factor != 0)
        throw ConfigurationError("coarsening factor must divide the number of noise steps");
    NoisePath<Scalar> c;
    c.modes = w.modes;
    c.dt = w.dt * static_cast<Scalar>(factor);
    c.seed = w.seed;
    c.increments = MatrixX<Scalar>::Zero(w.modes, w.steps() / factor);
    for (Eigen::Index k = 0; k < w.steps(); ++k) c.increments.col(k / factor) += w.increments.col(k);
    return c;
}

/// Flat binary: header (u64 J, u64 steps, f64 dt, u64 seed) followed by the
/// J x steps increments as row-major f64.
template <typename Scalar>
void write_noise(const std::string& file, const NoisePath<Scalar>& w) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + file + " for writing");
    const std::uint64_t modes = static_cast<std::uint64_t>(w.modes);
    const std::uint64_t steps = static_cast<std::uint64_t>(w.steps());
    const double dt = static_cast<double>(w.dt);
    out.write(reinterpret_cast<const char*>(&modes), sizeof modes);
    out.write(reinterpret_cast<const char*>(&steps), sizeof steps);
    out.write(reinterpret_cast<const char*>(&dt), sizeof dt);
    out.write(reinterpret_cast<const char*>(&w.seed), sizeof w.seed);
    for (int j = 0; j < w.modes; ++j) {
        for (Eigen::Index k = 0; k < w.steps(); ++k) {
            const double v = static_cast<double>(w.increments(j, k));
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
    }
    if (!out) throw std::runtime_error("failed writing " + file);
}

template <typename Scalar>
NoisePath<Scalar> read_noise(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file);
    std::uint64_t modes = 0, steps = 0, seed = 0;
    double dt = 0;
    in.read(reinterpret_cast<char*>(&modes), sizeof modes);
    in.read(reinterpret_cast<char*>(&steps), sizeof steps);
    in.read(reinterpret_cast<char*>(&dt), sizeof dt);
    in.read(reinterpret_cast<char*>(&seed), sizeof seed);
    if (!in || modes == 0 || modes > (1u << 20) || steps > (1ull << 32))
        throw std::runtime_error("malformed noise header in " + file);
    NoisePath<Scalar> w;
    w.modes = static_cast<int>(modes);
    w.dt = static_cast<Scalar>(dt);
    w.seed = seed;
    w.increments.resize(w.modes, static_cast<Eigen::Index>(steps));
    for (int j = 0; j < w.modes; ++j) {
        for (Eigen::Index k = 0; k < w.steps(); ++k) {
            double v = 0;
            in.read(reinterpret_cast<char*>(&v), sizeof v);
            w.increments(j, k) = static_cast<Scalar>(v);
        }
    }
    if (!in) throw std::runtime_error("truncated noise payload in " + file);
    return w;
}

}  // namespace rspde
