#pragma once

// Adaptive alphabetic coder on top of the flat dictionary. A symbol's
// codeword is its root-to-epsilon search path in the current tree, one bit
// (0 = left) per node whose two subtrees both hold epsilon marks; the
// other nodes on the path are crossed without a bit. After each symbol the
// encoder and decoder both apply one access, so they stay in lock step.
//
// Container layout, all integers big-endian:
//   "ALC1" | n:u32 | n x (len:u16, bytes) | m:u64 | payload (MSB first,
//   zero padded) | crc32(payload):u32

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dyntree/optimal_tree.hpp"

namespace dyntree {

struct BitString {
    std::vector<bool> bits;

    std::size_t size() const { return bits.size(); }
    std::string to_string() const;
    /// True when this is a proper or equal prefix of `o`.
    bool is_prefix_of(const BitString& o) const;
    friend bool operator==(const BitString&, const BitString&) = default;
    /// Lexicographic bit order.
    friend bool operator<(const BitString& a, const BitString& b) { return a.bits < b.bits; }
};

class BitWriter {
public:
    void put(bool bit);
    void put(const BitString& s);
    std::uint64_t bit_count() const { return bits_; }
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
    std::uint64_t bits_ = 0;
};

class BitReader {
public:
    BitReader(std::span<const std::uint8_t> bytes, std::uint64_t bit_count)
        : bytes_(bytes), limit_(bit_count) {}
    explicit BitReader(std::span<const std::uint8_t> bytes) : BitReader(bytes, bytes.size() * 8) {}

    /// Throws UnexpectedEof past the end.
    bool get();
    std::uint64_t position() const { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::uint64_t limit_;
    std::uint64_t pos_ = 0;
};

class Coder {
public:
    /// Symbols must be strictly increasing; each starts with count 1.
    explicit Coder(std::vector<std::string> alphabet);
    /// Starts from a prepared tree whose keys are the symbol ranks 0..n-1.
    Coder(std::vector<std::string> alphabet, DynTree tree);

    std::size_t alphabet_size() const { return alphabet_.size(); }
    const std::vector<std::string>& alphabet() const { return alphabet_; }
    std::optional<std::uint32_t> rank(std::string_view symbol) const;
    std::uint64_t emitted() const { return emitted_; }
    std::uint64_t count(std::uint32_t rank) const;

    /// Current codeword, without updating.
    BitString codeword(std::uint32_t rank) const;
    BitString encode_symbol(std::string_view symbol);
    BitString encode_rank(std::uint32_t rank);
    /// Reads one codeword and applies the same update as the encoder.
    std::uint32_t decode_rank(BitReader& in);
    const std::string& decode_symbol(BitReader& in) { return alphabet_[decode_rank(in)]; }

    const DynTree& tree() const { return tree_; }

private:
    std::vector<std::string> alphabet_;
    DynTree tree_;
    std::uint64_t emitted_ = 0;
};

struct EncodedStream {
    std::vector<std::uint8_t> bytes;
    std::uint64_t symbols = 0;
    std::uint64_t payload_bits = 0;
};

struct DecodedStream {
    std::vector<std::string> alphabet;
    std::vector<std::uint32_t> ranks;
};

EncodedStream encode_sequence(const std::vector<std::string>& alphabet,
                              std::span<const std::uint32_t> ranks);
EncodedStream encode_sequence(const std::vector<std::string>& alphabet,
                              std::span<const std::string> symbols);
DecodedStream decode_sequence(std::span<const std::uint8_t> container);

/// All 256 single-byte symbols in byte order.
std::vector<std::string> byte_alphabet();
EncodedStream encode_bytes(const std::vector<std::string>& alphabet, std::span<const std::uint8_t> data);
/// Every symbol of the container must be a single byte.
std::vector<std::uint8_t> decode_bytes(std::span<const std::uint8_t> container);

}  // namespace dyntree
