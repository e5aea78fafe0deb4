#include "sdde/noise.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "sdde/errors.hpp"
#include "sdde/kernels.hpp"
#include "sdde/philox.hpp"

namespace sdde {

namespace noise_detail {

void derive_key(std::uint64_t seed, std::uint32_t& key0, std::uint32_t& key1) {
    const std::uint64_t k = philox::mix64(seed);
    key0 = static_cast<std::uint32_t>(k);
    key1 = static_cast<std::uint32_t>(k >> 32);
}

int quantum_exponent(double master_dt) { return std::ilogb(std::sqrt(master_dt)) + 1 - 24; }

void gaussian_pair(const std::uint32_t* words, double& z0, double& z1) {
    const std::uint64_t a = std::uint64_t{words[0]} | (std::uint64_t{words[1]} << 32);
    const std::uint64_t b = std::uint64_t{words[2]} | (std::uint64_t{words[3]} << 32);
    constexpr double kUnit = 0x1.0p-53;
    const double u1 = static_cast<double>((a >> 11) + 1) * kUnit;  // (0, 1]
    const double u2 = static_cast<double>(b >> 11) * kUnit;        // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    z0 = r * std::cos(theta);
    z1 = r * std::sin(theta);
}

double quantize(double z, double sqrt_dt, int e) {
    return std::ldexp(std::nearbyint(std::ldexp(z * sqrt_dt, -e)), e);
}

}  // namespace noise_detail

BrownianLattice::BrownianLattice(double master_dt, std::uint64_t n_steps, std::size_t noise_dim,
                                 std::uint64_t seed, std::uint64_t path_id)
    : master_dt_(master_dt), n_steps_(n_steps), noise_dim_(noise_dim), seed_(seed), path_id_(path_id) {
    if (!(master_dt_ > 0.0) || !std::isfinite(master_dt_)) throw ArgumentError("master_dt must be positive");
    if (n_steps_ == 0) throw ArgumentError("lattice needs at least one step");
    if (n_steps_ > kMaxSteps) {
        std::ostringstream msg;
        msg << "lattice n_steps " << n_steps_ << " exceeds the exact-summation limit " << kMaxSteps;
        throw ArgumentError(msg.str());
    }
    if (noise_dim_ == 0) throw ArgumentError("noise_dim must be >= 1");
    sqrt_dt_ = std::sqrt(master_dt_);
    quantum_exp_ = noise_detail::quantum_exponent(master_dt_);
    quantum_ = std::ldexp(1.0, quantum_exp_);
    noise_detail::derive_key(seed_, key0_, key1_);
}

void BrownianLattice::increment_into(std::uint64_t k, std::span<double> out) const {
    if (k >= n_steps_) throw ArgumentError("increment index beyond lattice");
    if (out.size() != noise_dim_) throw ArgumentError("increment buffer has wrong dimension");
    std::uint32_t words[4];
    for (std::size_t c = 0; c < noise_dim_; ++c) {
        const std::uint64_t i = k * noise_dim_ + c;
        kernels::scalar_table().philox_paths(i / 2, &path_id_, 1, key0_, key1_, words);
        double z0, z1;
        noise_detail::gaussian_pair(words, z0, z1);
        out[c] = noise_detail::quantize(i % 2 == 0 ? z0 : z1, sqrt_dt_, quantum_exp_);
    }
}

Vector BrownianLattice::increment(std::uint64_t k) const {
    Vector out(noise_dim_);
    increment_into(k, out);
    return out;
}

void BrownianLattice::sum_into(std::uint64_t first, std::uint64_t count, std::span<double> out) const {
    if (first + count > n_steps_) throw ArgumentError("increment range beyond lattice");
    std::fill(out.begin(), out.end(), 0.0);
    Vector inc(noise_dim_);
    for (std::uint64_t k = first; k < first + count; ++k) {
        increment_into(k, inc);
        for (std::size_t c = 0; c < noise_dim_; ++c) out[c] = out[c] + inc[c];
    }
}

std::vector<Vector> BrownianLattice::master_increments() const {
    std::vector<Vector> out(n_steps_, Vector(noise_dim_));
    for (std::uint64_t k = 0; k < n_steps_; ++k) increment_into(k, out[k]);
    return out;
}

std::vector<Vector> BrownianLattice::coarsen(std::uint64_t factor) const {
    return coarsen_stream(master_increments(), factor);
}

std::vector<Vector> coarsen_stream(const std::vector<Vector>& stream, std::uint64_t factor) {
    if (factor == 0 || stream.size() % factor != 0) {
        std::ostringstream msg;
        msg << "coarsening factor " << factor << " does not divide " << stream.size() << " increments";
        throw ArgumentError(msg.str());
    }
    const std::size_t m = stream.empty() ? 0 : stream.front().size();
    std::vector<Vector> out(stream.size() / factor, Vector(m, 0.0));
    for (std::size_t j = 0; j < out.size(); ++j)
        for (std::uint64_t i = 0; i < factor; ++i) {
            const Vector& inc = stream[j * factor + i];
            for (std::size_t c = 0; c < m; ++c) out[j][c] = out[j][c] + inc[c];
        }
    return out;
}

BlockNoise::BlockNoise(const LatticeFamily& family, std::span<const std::uint64_t> path_ids, std::size_t stride)
    : family_(family), path_ids_(path_ids.begin(), path_ids.end()), stride_(stride) {
    if (path_ids_.size() > stride_) throw ArgumentError("more lanes than block stride");
    // Validates the family the same way a single lattice would.
    BrownianLattice probe(family_, 0);
    sqrt_dt_ = std::sqrt(family_.master_dt);
    quantum_exp_ = noise_detail::quantum_exponent(family_.master_dt);
    noise_detail::derive_key(family_.seed, key0_, key1_);
    words_.resize(4 * path_ids_.size());
}

void BlockNoise::fill(std::uint64_t first, std::size_t steps, std::span<double> out) {
    const std::size_t m = family_.noise_dim;
    if (first + steps > family_.n_steps) throw ArgumentError("block noise request beyond lattice");
    if ((first * m) % 2 != 0) throw ArgumentError("block noise must start on an even normal index");
    const std::size_t lanes = path_ids_.size();
    const std::uint64_t begin = first * m;
    const std::uint64_t end = (first + steps) * m;
    const auto& kt = kernels::active();
    for (std::uint64_t pair = begin / 2; 2 * pair < end; ++pair) {
        kt.philox_paths(pair, path_ids_.data(), lanes, key0_, key1_, words_.data());
        for (std::size_t l = 0; l < lanes; ++l) {
            double z[2];
            noise_detail::gaussian_pair(&words_[4 * l], z[0], z[1]);
            for (int h = 0; h < 2; ++h) {
                const std::uint64_t i = 2 * pair + h;
                if (i >= end) break;
                const std::uint64_t local = i - begin;  // = k_local * m + c
                out[local * stride_ + l] = noise_detail::quantize(z[h], sqrt_dt_, quantum_exp_);
            }
        }
    }
}

}  // namespace sdde
