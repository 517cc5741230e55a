#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace lmmci {

// Philox4x64-10 counter-based generator.  The (seed, stream_id) pair is the
// 128-bit key, so every stream is addressable without touching any other;
// `substream` occupies the second counter word and gives cheap derived
// sequences (used for refit retries).
class RandomStream {
public:
    using result_type = std::uint64_t;
    using Block = std::array<std::uint64_t, 4>;

    RandomStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t substream = 0) noexcept
        : key_{seed, stream_id}, substream_(substream) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept;

    // Uniform on the open interval (0, 1) with 53 random bits.
    double uniform() noexcept;

    std::uint64_t seed() const noexcept { return key_[0]; }
    std::uint64_t stream_id() const noexcept { return key_[1]; }
    std::uint64_t substream() const noexcept { return substream_; }

    // Raw Philox4x64-10 bijection, exposed for known-answer tests.
    static Block philox(const Block& counter, const std::array<std::uint64_t, 2>& key) noexcept;

private:
    std::array<std::uint64_t, 2> key_;
    std::uint64_t substream_;
    std::uint64_t block_index_ = 0;
    Block buffer_{};
    unsigned buffer_pos_ = 4;
};

}  // namespace lmmci
