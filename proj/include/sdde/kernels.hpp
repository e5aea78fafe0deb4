#pragma once

// Data-parallel inner loops of the path engine. Every kernel operates on
// structure-of-arrays blocks where the fast index is the path lane, so one
// vector register holds the same component of several independent paths.
//
// Each kernel has a scalar reference and, on x86-64, an AVX2 variant. The
// variants perform the same IEEE operations in the same order per lane and
// are required to agree bitwise; see tests/test_kernels.cpp.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace sdde::kernels {

struct KernelTable {
    std::string_view name;

    /// Philox4x32-10 over `count` counters {lo(index), hi(index), lo(path_ids[i]), hi(path_ids[i])}
    /// under key {key0, key1}. Writes 4 words per counter to out[4*i .. 4*i+3].
    void (*philox_paths)(std::uint64_t index, const std::uint64_t* path_ids, std::size_t count,
                         std::uint32_t key0, std::uint32_t key1, std::uint32_t* out);

    /// Radially projects `count` vectors onto the closed ball of `radius`. Component c of lane l
    /// lives at soa[c*stride + l]. Zero vectors stay zero.
    void (*project_to_ball)(double* soa, std::size_t dim, std::size_t stride, std::size_t count,
                            double radius);

    /// x += f*dt + sum_j g_j*dw_j, lane-wise, with the sum taken in ascending j.
    /// Layouts: x, f: [dim][stride]; g: [dim][noise_dim][stride]; dw: [noise_dim][stride].
    void (*euler_update)(double* x, const double* f, const double* g, const double* dw, double dt,
                         std::size_t dim, std::size_t noise_dim, std::size_t stride, std::size_t count);

    /// acc[i] += inc[i] for i < count.
    void (*accumulate)(double* acc, const double* inc, std::size_t count);

    /// out[l] = sum_c soa[c*stride + l]^2, summed in ascending c.
    void (*squared_norms)(const double* soa, std::size_t dim, std::size_t stride, std::size_t count,
                          double* out);
};

const KernelTable& scalar_table();

/// AVX2 table, or nullptr when the build or the CPU lacks AVX2.
const KernelTable* avx2_table();

/// Table used by the engine. Chosen once: SDDE_KERNELS=scalar|avx2 overrides, otherwise the
/// widest variant the CPU supports.
const KernelTable& active();

/// Shrink factor applied to radius/|x| so the projected norm never exceeds the radius after rounding.
double projection_shrink(std::size_t dim);

}  // namespace sdde::kernels
