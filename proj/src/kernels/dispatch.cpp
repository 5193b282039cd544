#include <cstdlib>
#include <string_view>

#include "isap/kernels.hpp"

namespace isap::kernels {

const KernelTable& scalar_kernels() { return detail::scalar_table(); }

const KernelTable* avx2_kernels() {
#if defined(ISAP_HAVE_AVX2_KERNELS)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return &detail::avx2_table();
#endif
  return nullptr;
}

namespace {
const KernelTable& select() {
  if (const char* env = std::getenv("ISAP_KERNELS");
      env != nullptr && std::string_view(env) == "scalar")
    return scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return *t;
  return scalar_kernels();
}
}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace isap::kernels
