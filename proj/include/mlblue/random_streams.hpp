#pragma once

#include <cstdint>
#include <limits>

namespace mlblue {

// Disjoint key spaces so that pilot and estimation draws never overlap.
enum class StreamDomain : std::uint64_t { estimate = 1, pilot = 2, test = 3 };

// Counter-based generator: the state is a hash of the stream key and the
// output is splitmix64 over it. Satisfies UniformRandomBitGenerator, so it
// plugs into the standard distributions.
class StreamEngine {
public:
    using result_type = std::uint64_t;

    StreamEngine(std::uint64_t seed, StreamDomain domain, std::uint64_t group, std::uint64_t sample,
                 std::uint64_t replication) {
        state_ = mix(seed);
        state_ = mix(state_ ^ static_cast<std::uint64_t>(domain));
        state_ = mix(state_ ^ group);
        state_ = mix(state_ ^ sample);
        state_ = mix(state_ ^ replication);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_ = 0;
};

}  // namespace mlblue
