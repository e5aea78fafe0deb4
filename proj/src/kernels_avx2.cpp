// AVX2 variants of the path-engine kernels. This translation unit is the only
// one compiled with -mavx2; nothing here may be called unless the CPU reports AVX2.

#include "sdde/kernels.hpp"

#if defined(SDDE_HAVE_AVX2)

#include <immintrin.h>

#include "sdde/philox.hpp"

namespace sdde::kernels {

namespace {

constexpr std::size_t kWidth = 4;

void philox_paths(std::uint64_t index, const std::uint64_t* path_ids, std::size_t count, std::uint32_t key0,
                  std::uint32_t key1, std::uint32_t* out) {
    const __m256i mask = _mm256_set1_epi64x(0xFFFFFFFFll);
    const __m256i mul0 = _mm256_set1_epi64x(philox::kMul0);
    const __m256i mul1 = _mm256_set1_epi64x(philox::kMul1);
    const __m256i idx_lo = _mm256_set1_epi64x(static_cast<std::uint32_t>(index));
    const __m256i idx_hi = _mm256_set1_epi64x(static_cast<std::uint32_t>(index >> 32));

    std::size_t i = 0;
    for (; i + kWidth <= count; i += kWidth) {
        const __m256i path = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(path_ids + i));
        __m256i c0 = idx_lo;
        __m256i c1 = idx_hi;
        __m256i c2 = _mm256_and_si256(path, mask);
        __m256i c3 = _mm256_srli_epi64(path, 32);
        std::uint32_t k0 = key0, k1 = key1;
        for (int r = 0; r < philox::kRounds; ++r) {
            if (r > 0) {
                k0 += philox::kWeyl0;
                k1 += philox::kWeyl1;
            }
            const __m256i p0 = _mm256_mul_epu32(c0, mul0);
            const __m256i p1 = _mm256_mul_epu32(c2, mul1);
            const __m256i hi0 = _mm256_srli_epi64(p0, 32);
            const __m256i lo0 = _mm256_and_si256(p0, mask);
            const __m256i hi1 = _mm256_srli_epi64(p1, 32);
            const __m256i lo1 = _mm256_and_si256(p1, mask);
            c0 = _mm256_xor_si256(_mm256_xor_si256(hi1, c1), _mm256_set1_epi64x(k0));
            c1 = lo1;
            c2 = _mm256_xor_si256(_mm256_xor_si256(hi0, c3), _mm256_set1_epi64x(k1));
            c3 = lo0;
        }
        alignas(32) std::uint64_t w[4][kWidth];
        _mm256_store_si256(reinterpret_cast<__m256i*>(w[0]), c0);
        _mm256_store_si256(reinterpret_cast<__m256i*>(w[1]), c1);
        _mm256_store_si256(reinterpret_cast<__m256i*>(w[2]), c2);
        _mm256_store_si256(reinterpret_cast<__m256i*>(w[3]), c3);
        for (std::size_t l = 0; l < kWidth; ++l)
            for (int q = 0; q < 4; ++q) out[4 * (i + l) + q] = static_cast<std::uint32_t>(w[q][l]);
    }
    if (i < count) scalar_table().philox_paths(index, path_ids + i, count - i, key0, key1, out + 4 * i);
}

void project_to_ball(double* soa, std::size_t dim, std::size_t stride, std::size_t count, double radius) {
    const __m256d r = _mm256_set1_pd(radius);
    const __m256d shrink = _mm256_set1_pd(projection_shrink(dim));
    const __m256d one = _mm256_set1_pd(1.0);
    std::size_t l = 0;
    for (; l + kWidth <= count; l += kWidth) {
        __m256d s = _mm256_setzero_pd();
        for (std::size_t c = 0; c < dim; ++c) {
            const __m256d v = _mm256_loadu_pd(soa + c * stride + l);
            s = _mm256_add_pd(s, _mm256_mul_pd(v, v));
        }
        const __m256d nrm = _mm256_sqrt_pd(s);
        const __m256d outside = _mm256_cmp_pd(nrm, r, _CMP_GT_OQ);
        if (_mm256_movemask_pd(outside) == 0) continue;
        const __m256d scale = _mm256_mul_pd(_mm256_div_pd(r, nrm), shrink);
        const __m256d factor = _mm256_blendv_pd(one, scale, outside);
        for (std::size_t c = 0; c < dim; ++c) {
            const __m256d v = _mm256_loadu_pd(soa + c * stride + l);
            // Lanes inside the ball are multiplied by exactly 1.0, which is the identity.
            _mm256_storeu_pd(soa + c * stride + l, _mm256_mul_pd(v, factor));
        }
    }
    if (l < count) {
        // Tail lanes: shift the base pointer so the scalar kernel sees lane 0 at l.
        scalar_table().project_to_ball(soa + l, dim, stride, count - l, radius);
    }
}

void euler_update(double* x, const double* f, const double* g, const double* dw, double dt, std::size_t dim,
                  std::size_t noise_dim, std::size_t stride, std::size_t count) {
    const __m256d vdt = _mm256_set1_pd(dt);
    std::size_t l = 0;
    for (; l + kWidth <= count; l += kWidth) {
        for (std::size_t c = 0; c < dim; ++c) {
            __m256d v = _mm256_add_pd(_mm256_loadu_pd(x + c * stride + l),
                                      _mm256_mul_pd(_mm256_loadu_pd(f + c * stride + l), vdt));
            for (std::size_t j = 0; j < noise_dim; ++j) {
                const __m256d gj = _mm256_loadu_pd(g + (c * noise_dim + j) * stride + l);
                v = _mm256_add_pd(v, _mm256_mul_pd(gj, _mm256_loadu_pd(dw + j * stride + l)));
            }
            _mm256_storeu_pd(x + c * stride + l, v);
        }
    }
    if (l < count)
        scalar_table().euler_update(x + l, f + l, g + l, dw + l, dt, dim, noise_dim, stride, count - l);
}

void accumulate(double* acc, const double* inc, std::size_t count) {
    std::size_t i = 0;
    for (; i + kWidth <= count; i += kWidth)
        _mm256_storeu_pd(acc + i, _mm256_add_pd(_mm256_loadu_pd(acc + i), _mm256_loadu_pd(inc + i)));
    for (; i < count; ++i) acc[i] = acc[i] + inc[i];
}

void squared_norms(const double* soa, std::size_t dim, std::size_t stride, std::size_t count, double* out) {
    std::size_t l = 0;
    for (; l + kWidth <= count; l += kWidth) {
        __m256d s = _mm256_setzero_pd();
        for (std::size_t c = 0; c < dim; ++c) {
            const __m256d v = _mm256_loadu_pd(soa + c * stride + l);
            s = _mm256_add_pd(s, _mm256_mul_pd(v, v));
        }
        _mm256_storeu_pd(out + l, s);
    }
    if (l < count) scalar_table().squared_norms(soa + l, dim, stride, count - l, out + l);
}

const KernelTable kAvx2{"avx2", philox_paths, project_to_ball, euler_update, accumulate, squared_norms};

}  // namespace

const KernelTable* avx2_table() {
    static const bool supported = __builtin_cpu_supports("avx2");
    return supported ? &kAvx2 : nullptr;
}

}  // namespace sdde::kernels

#else

namespace sdde::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace sdde::kernels

#endif
