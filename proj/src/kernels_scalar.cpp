#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>

#include "sdde/kernels.hpp"
#include "sdde/philox.hpp"

namespace sdde::kernels {

namespace {

void philox_paths(std::uint64_t index, const std::uint64_t* path_ids, std::size_t count, std::uint32_t key0,
                  std::uint32_t key1, std::uint32_t* out) {
    for (std::size_t i = 0; i < count; ++i) {
        const philox::Counter c{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                                static_cast<std::uint32_t>(path_ids[i]),
                                static_cast<std::uint32_t>(path_ids[i] >> 32)};
        const auto r = philox::generate(c, {key0, key1});
        for (int w = 0; w < 4; ++w) out[4 * i + w] = r[w];
    }
}

void project_to_ball(double* soa, std::size_t dim, std::size_t stride, std::size_t count, double radius) {
    const double shrink = projection_shrink(dim);
    for (std::size_t l = 0; l < count; ++l) {
        double s = 0.0;
        for (std::size_t c = 0; c < dim; ++c) s = s + soa[c * stride + l] * soa[c * stride + l];
        const double nrm = std::sqrt(s);
        if (nrm > radius) {
            const double scale = (radius / nrm) * shrink;
            for (std::size_t c = 0; c < dim; ++c) soa[c * stride + l] = soa[c * stride + l] * scale;
        }
    }
}

void euler_update(double* x, const double* f, const double* g, const double* dw, double dt, std::size_t dim,
                  std::size_t noise_dim, std::size_t stride, std::size_t count) {
    for (std::size_t c = 0; c < dim; ++c) {
        for (std::size_t l = 0; l < count; ++l) {
            double v = x[c * stride + l] + f[c * stride + l] * dt;
            for (std::size_t j = 0; j < noise_dim; ++j)
                v = v + g[(c * noise_dim + j) * stride + l] * dw[j * stride + l];
            x[c * stride + l] = v;
        }
    }
}

void accumulate(double* acc, const double* inc, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) acc[i] = acc[i] + inc[i];
}

void squared_norms(const double* soa, std::size_t dim, std::size_t stride, std::size_t count, double* out) {
    for (std::size_t l = 0; l < count; ++l) {
        double s = 0.0;
        for (std::size_t c = 0; c < dim; ++c) s = s + soa[c * stride + l] * soa[c * stride + l];
        out[l] = s;
    }
}

const KernelTable kScalar{"scalar", philox_paths, project_to_ball, euler_update, accumulate, squared_norms};

const KernelTable& choose() {
    const char* env = std::getenv("SDDE_KERNELS");
    const std::string want = env ? env : "auto";
    if (want == "scalar") return kScalar;
    if (const KernelTable* wide = avx2_table()) return *wide;
    return kScalar;
}

}  // namespace

double projection_shrink(std::size_t dim) {
    return 1.0 - static_cast<double>(dim + 8) * std::numeric_limits<double>::epsilon();
}

const KernelTable& scalar_table() { return kScalar; }

const KernelTable& active() {
    static const KernelTable& table = choose();
    return table;
}

}  // namespace sdde::kernels
