#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sdde/linalg.hpp"

namespace sdde {

/// Parameters shared by every path of an ensemble: the master grid and the seed.
/// A lattice for one trajectory is obtained with `lattice(path_id)`.
struct LatticeFamily {
    double master_dt = 0.0;
    std::uint64_t n_steps = 0;
    std::size_t noise_dim = 1;
    std::uint64_t seed = 0;
};

/// Brownian increments of one path on the master grid.
///
/// Increment k, component c, is a pure function of (seed, path_id, k, c): a
/// Philox4x32-10 block keyed by the mixed seed, with the path id in the upper
/// counter words, feeds a Box-Muller pair. Values are rounded to a dyadic
/// quantum of 2^-24 relative to sqrt(master_dt), which makes every partial
/// sum of up to kMaxSteps increments exact in double precision. Coarsening is
/// therefore independent of summation order and coupled runs at different
/// step sizes see exactly the same Brownian path.
class BrownianLattice {
public:
    static constexpr std::uint64_t kMaxSteps = std::uint64_t{1} << 25;

    BrownianLattice(double master_dt, std::uint64_t n_steps, std::size_t noise_dim, std::uint64_t seed,
                    std::uint64_t path_id);
    BrownianLattice(const LatticeFamily& family, std::uint64_t path_id)
        : BrownianLattice(family.master_dt, family.n_steps, family.noise_dim, family.seed, path_id) {}

    double master_dt() const noexcept { return master_dt_; }
    std::uint64_t n_steps() const noexcept { return n_steps_; }
    std::size_t noise_dim() const noexcept { return noise_dim_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t path_id() const noexcept { return path_id_; }
    double quantum() const noexcept { return quantum_; }

    /// Increment W(t_{k+1}) - W(t_k) on the master grid.
    Vector increment(std::uint64_t k) const;
    void increment_into(std::uint64_t k, std::span<double> out) const;

    /// Sum of master increments [first, first + count), left to right.
    void sum_into(std::uint64_t first, std::uint64_t count, std::span<double> out) const;

    std::vector<Vector> master_increments() const;

    /// n_steps/factor increments; increment j is the left-to-right sum of master increments
    /// [j*factor, (j+1)*factor). Throws ArgumentError unless factor >= 1 divides n_steps.
    std::vector<Vector> coarsen(std::uint64_t factor) const;

private:
    double master_dt_;
    std::uint64_t n_steps_;
    std::size_t noise_dim_;
    std::uint64_t seed_;
    std::uint64_t path_id_;
    double sqrt_dt_;
    double quantum_;
    int quantum_exp_;
    std::uint32_t key0_;
    std::uint32_t key1_;
};

/// Coarsens an arbitrary increment stream by `factor`, summing left to right.
std::vector<Vector> coarsen_stream(const std::vector<Vector>& stream, std::uint64_t factor);

namespace noise_detail {

/// Philox key derived from the user seed.
void derive_key(std::uint64_t seed, std::uint32_t& key0, std::uint32_t& key1);

/// Quantum exponent e such that increments are integer multiples of 2^e.
int quantum_exponent(double master_dt);

/// Box-Muller pair from one Philox output block.
void gaussian_pair(const std::uint32_t* words, double& z0, double& z1);

/// Rounds z*sqrt_dt to the dyadic grid 2^e.
double quantize(double z, double sqrt_dt, int e);

}  // namespace noise_detail

/// Generates master increments for a block of paths in lock step, lane-major:
/// out[(k_local * noise_dim + c) * stride + lane]. Bitwise identical to
/// BrownianLattice::increment for each lane.
class BlockNoise {
public:
    BlockNoise(const LatticeFamily& family, std::span<const std::uint64_t> path_ids, std::size_t stride);

    /// Fills `steps` consecutive master increments starting at master index `first`.
    /// `first * noise_dim` must be even.
    void fill(std::uint64_t first, std::size_t steps, std::span<double> out);

private:
    LatticeFamily family_;
    std::vector<std::uint64_t> path_ids_;
    std::size_t stride_;
    double sqrt_dt_;
    int quantum_exp_;
    std::uint32_t key0_;
    std::uint32_t key1_;
    std::vector<std::uint32_t> words_;
};

}  // namespace sdde
