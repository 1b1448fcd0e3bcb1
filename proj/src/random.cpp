#include "tadpole/random.hpp"

namespace tadpole {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t key) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = base ^ (key + 0x9e3779b97f4a7c15ULL + (base << 6) + (base >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace tadpole
