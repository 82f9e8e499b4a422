#include <atomic>
#include <cstdlib>
#include <string_view>

#include "eagps/simd/kernels.hpp"

namespace eagps::simd {

#ifdef EAGPS_HAVE_AVX2
const KernelTable& avx2_kernel_table();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(EAGPS_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* initial_table() {
    const KernelTable* avx = avx2_kernels();
    if (const char* env = std::getenv("EAGPS_SIMD")) {
        std::string_view want{env};
        if (want == "scalar") return &scalar_kernels();
        if (want == "avx2" && avx) return avx;
    }
    return avx ? avx : &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
    static std::atomic<const KernelTable*> table{initial_table()};
    return table;
}

}  // namespace

const KernelTable* avx2_kernels() {
#ifdef EAGPS_HAVE_AVX2
    static const bool ok = cpu_has_avx2();
    return ok ? &avx2_kernel_table() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select(std::string_view name) {
    if (name == "scalar") {
        current().store(&scalar_kernels(), std::memory_order_release);
        return true;
    }
    if (name == "avx2") {
        if (const KernelTable* t = avx2_kernels()) {
            current().store(t, std::memory_order_release);
            return true;
        }
    }
    return false;
}

}  // namespace eagps::simd
