#include "dyntree/alphacoder.hpp"

#include <zlib.h>

#include <algorithm>
#include <limits>

#include "dyntree/error.hpp"

namespace dyntree {

std::string BitString::to_string() const {
    std::string s;
    s.reserve(bits.size());
    for (bool b : bits) s.push_back(b ? '1' : '0');
    return s;
}

bool BitString::is_prefix_of(const BitString& o) const {
    return bits.size() <= o.bits.size() && std::equal(bits.begin(), bits.end(), o.bits.begin());
}

void BitWriter::put(bool bit) {
    if (bits_ % 8 == 0) bytes_.push_back(0);
    if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bits_ % 8));
    ++bits_;
}

void BitWriter::put(const BitString& s) {
    for (bool b : s.bits) put(b);
}

bool BitReader::get() {
    if (pos_ >= limit_) throw Error(ErrorCode::UnexpectedEof, "bit stream ended inside a codeword");
    bool bit = (bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
    ++pos_;
    return bit;
}

namespace {

std::vector<std::pair<Key, std::uint64_t>> uniform_start(std::size_t n) {
    std::vector<std::pair<Key, std::uint64_t>> items;
    items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) items.push_back({i, 1});
    return items;
}

void check_alphabet(const std::vector<std::string>& alphabet) {
    if (alphabet.size() < 2) throw Error(ErrorCode::AlphabetTooSmall, "need at least two symbols");
    if (alphabet.size() > std::numeric_limits<std::uint32_t>::max())
        throw Error(ErrorCode::OutOfRange, "alphabet too large");
    for (std::size_t i = 1; i < alphabet.size(); ++i)
        if (!(alphabet[i - 1] < alphabet[i]))
            throw Error(ErrorCode::KeyOrder, "alphabet must be strictly increasing");
}

}  // namespace

Coder::Coder(std::vector<std::string> alphabet) : alphabet_(std::move(alphabet)) {
    check_alphabet(alphabet_);
    auto items = uniform_start(alphabet_.size());
    tree_ = DynTree::build(items);
}

Coder::Coder(std::vector<std::string> alphabet, DynTree tree)
    : alphabet_(std::move(alphabet)), tree_(std::move(tree)) {
    check_alphabet(alphabet_);
    if (tree_.size() != alphabet_.size()) throw Error(ErrorCode::OutOfRange, "tree and alphabet sizes differ");
    for (std::uint32_t r = 0; r < alphabet_.size(); ++r)
        if (!tree_.element(r)) throw Error(ErrorCode::OutOfRange, "tree keys must be the ranks 0..n-1");
}

std::optional<std::uint32_t> Coder::rank(std::string_view symbol) const {
    auto it = std::lower_bound(alphabet_.begin(), alphabet_.end(), symbol);
    if (it == alphabet_.end() || *it != symbol) return std::nullopt;
    return static_cast<std::uint32_t>(it - alphabet_.begin());
}

std::uint64_t Coder::count(std::uint32_t rank) const {
    const ElementRecord* e = tree_.element(rank);
    if (!e) throw Error(ErrorCode::NotInAlphabet, "rank " + std::to_string(rank));
    return e->weights.w;
}

// Only nodes where both subtrees hold an epsilon mark cost a bit; every
// other node on the path has a single way on and is crossed silently.
BitString Coder::codeword(std::uint32_t rank) const {
    if (rank >= alphabet_.size()) throw Error(ErrorCode::NotInAlphabet, "rank " + std::to_string(rank));
    const KNeighborTree& t = tree_.tree();
    BitString out;
    NodeId v = t.root();
    while (t.node(v).eps_owner == kNoOwner) {
        const KNode& n = t.node(v);
        if (n.nkids == 2) {
            const KNode& l = t.node(n.kids[0]);
            bool left = !l.eps.empty() && rank <= l.eps.hi;
            if (!l.eps.empty() && !t.node(n.kids[1]).eps.empty()) out.bits.push_back(!left);
            v = n.kids[left ? 0 : 1];
        } else if (n.nkids == 1) {
            v = n.kids[0];
        } else {
            throw Error(ErrorCode::StructureCorrupt, "search left the marked nodes");
        }
    }
    if (t.node(v).eps_key != rank) throw Error(ErrorCode::StructureCorrupt, "search ended at another symbol");
    return out;
}

BitString Coder::encode_rank(std::uint32_t rank) {
    BitString out = codeword(rank);
    tree_.access(rank);
    ++emitted_;
    return out;
}

BitString Coder::encode_symbol(std::string_view symbol) {
    auto r = rank(symbol);
    if (!r) throw Error(ErrorCode::NotInAlphabet, "symbol not in alphabet");
    return encode_rank(*r);
}

std::uint32_t Coder::decode_rank(BitReader& in) {
    const KNeighborTree& t = tree_.tree();
    NodeId v = t.root();
    while (t.node(v).eps_owner == kNoOwner) {
        const KNode& n = t.node(v);
        if (n.nkids == 0) throw Error(ErrorCode::CorruptStream, "codeword runs past the tree");
        if (n.nkids == 1) {
            v = n.kids[0];
            continue;
        }
        bool l = !t.node(n.kids[0]).eps.empty(), r = !t.node(n.kids[1]).eps.empty();
        if (l && r)
            v = n.kids[in.get() ? 1 : 0];
        else if (l || r)
            v = n.kids[l ? 0 : 1];
        else
            throw Error(ErrorCode::CorruptStream, "codeword runs past the tree");
    }
    auto r = static_cast<std::uint32_t>(t.node(v).eps_key);
    tree_.access(r);
    ++emitted_;
    return r;
}

namespace {

constexpr char kMagic[4] = {'A', 'L', 'C', '1'};

void put_be(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths
    std::size_t off = 0;
    while (off < bytes.size()) {
        auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = crc32(crc, bytes.data() + off, chunk);
        off += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

class ByteCursor {
public:
    explicit ByteCursor(std::span<const std::uint8_t> b) : b_(b) {}
    std::uint64_t be(int bytes) {
        need(bytes);
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v = (v << 8) | b_[pos_++];
        return v;
    }
    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto s = b_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t left() const { return b_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw Error(ErrorCode::UnexpectedEof, "container truncated");
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> header(const std::vector<std::string>& alphabet, std::uint64_t m) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_be(out, alphabet.size(), 4);
    for (const std::string& s : alphabet) {
        if (s.size() > 0xffff) throw Error(ErrorCode::OutOfRange, "symbol longer than 65535 bytes");
        put_be(out, s.size(), 2);
        out.insert(out.end(), s.begin(), s.end());
    }
    put_be(out, m, 8);
    return out;
}

}  // namespace

EncodedStream encode_sequence(const std::vector<std::string>& alphabet,
                              std::span<const std::uint32_t> ranks) {
    Coder coder(alphabet);
    BitWriter w;
    for (std::uint32_t r : ranks) w.put(coder.encode_rank(r));
    EncodedStream out;
    out.bytes = header(alphabet, ranks.size());
    out.bytes.insert(out.bytes.end(), w.bytes().begin(), w.bytes().end());
    put_be(out.bytes, crc_of(w.bytes()), 4);
    out.symbols = ranks.size();
    out.payload_bits = w.bit_count();
    return out;
}

EncodedStream encode_sequence(const std::vector<std::string>& alphabet,
                              std::span<const std::string> symbols) {
    Coder probe(alphabet);
    std::vector<std::uint32_t> ranks;
    ranks.reserve(symbols.size());
    for (const std::string& s : symbols) {
        auto r = probe.rank(s);
        if (!r) throw Error(ErrorCode::NotInAlphabet, "symbol not in alphabet");
        ranks.push_back(*r);
    }
    return encode_sequence(alphabet, ranks);
}

DecodedStream decode_sequence(std::span<const std::uint8_t> container) {
    ByteCursor in(container);
    auto magic = in.take(4);
    if (!std::equal(magic.begin(), magic.end(), kMagic)) throw Error(ErrorCode::CorruptStream, "bad magic");
    std::uint64_t n = in.be(4);
    DecodedStream out;
    for (std::uint64_t i = 0; i < n; ++i) {
        std::size_t len = in.be(2);
        auto s = in.take(len);
        out.alphabet.emplace_back(s.begin(), s.end());
    }
    std::uint64_t m = in.be(8);
    if (in.left() < 4) throw Error(ErrorCode::UnexpectedEof, "container truncated");
    auto payload = in.take(in.left() - 4);
    std::uint32_t crc = static_cast<std::uint32_t>(in.be(4));
    if (crc != crc_of(payload)) throw Error(ErrorCode::CorruptStream, "payload checksum mismatch");

    if (m == 0) {
        if (!payload.empty()) throw Error(ErrorCode::CorruptStream, "payload without symbols");
        return out;
    }
    std::optional<Coder> coder;
    try {
        coder.emplace(out.alphabet);
    } catch (const Error& e) {
        throw Error(ErrorCode::CorruptStream, std::string("header alphabet: ") + e.what());
    }
    BitReader bits(payload);
    // every codeword has at least one bit
    if (m > payload.size() * 8) throw Error(ErrorCode::UnexpectedEof, "fewer payload bits than symbols");
    out.ranks.reserve(m);
    for (std::uint64_t i = 0; i < m; ++i) out.ranks.push_back(coder->decode_rank(bits));
    std::uint64_t used = bits.position();
    if ((used + 7) / 8 != payload.size()) throw Error(ErrorCode::CorruptStream, "trailing payload bytes");
    for (; used < payload.size() * 8; ++used)
        if (bits.get()) throw Error(ErrorCode::CorruptStream, "nonzero padding");
    return out;
}

std::vector<std::string> byte_alphabet() {
    std::vector<std::string> a;
    for (int b = 0; b < 256; ++b) a.emplace_back(1, static_cast<char>(b));
    return a;
}

EncodedStream encode_bytes(const std::vector<std::string>& alphabet, std::span<const std::uint8_t> data) {
    // byte -> rank through a table; symbols of other lengths never match
    std::vector<std::int64_t> table(256, -1);
    for (std::size_t i = 0; i < alphabet.size(); ++i)
        if (alphabet[i].size() == 1) table[static_cast<std::uint8_t>(alphabet[i][0])] = static_cast<std::int64_t>(i);
    std::vector<std::uint32_t> ranks;
    ranks.reserve(data.size());
    for (std::uint8_t b : data) {
        if (table[b] < 0) throw Error(ErrorCode::NotInAlphabet, "byte " + std::to_string(b));
        ranks.push_back(static_cast<std::uint32_t>(table[b]));
    }
    return encode_sequence(alphabet, ranks);
}

std::vector<std::uint8_t> decode_bytes(std::span<const std::uint8_t> container) {
    DecodedStream d = decode_sequence(container);
    for (const std::string& s : d.alphabet)
        if (s.size() != 1) throw Error(ErrorCode::CorruptStream, "alphabet is not single bytes");
    std::vector<std::uint8_t> out;
    out.reserve(d.ranks.size());
    for (std::uint32_t r : d.ranks) out.push_back(static_cast<std::uint8_t>(d.alphabet[r][0]));
    return out;
}

}  // namespace dyntree
