#include "hmch/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace hmch::kernels {

const KernelTable& scalar_table()
{
    static const KernelTable table{"scalar", &scalar::stiffness_apply, &scalar::energy_product,
                                   &scalar::weighted_integral};
    return table;
}

const KernelTable* avx2_table()
{
#if defined(HMCH_HAVE_AVX2)
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    static const KernelTable table{"avx2", &avx2::stiffness_apply, &avx2::energy_product,
                                   &avx2::weighted_integral};
    return supported ? &table : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active()
{
    static const KernelTable& chosen = [] () -> const KernelTable& {
        const char* env = std::getenv("HMCH_SIMD");
        if (env && std::strcmp(env, "scalar") == 0)
            return scalar_table();
        if (const KernelTable* t = avx2_table())
            return *t;
        return scalar_table();
    }();
    return chosen;
}

} // namespace hmch::kernels
