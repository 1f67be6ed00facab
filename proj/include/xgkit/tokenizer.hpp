#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace xgkit {

using TokenIds = std::vector<int>;

inline constexpr int kPadId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kUnkId = 2;
inline constexpr int kNumSpecial = 3;
inline constexpr int kByteOffset = kNumSpecial;
inline constexpr int kNumBytes = 256;
inline constexpr int kNumSentinels = 100;

// Byte-level pair-merge subword model.
//
// Id layout: [0, 3) PAD/EOS/UNK, [3, 259) the 256 single-byte pieces,
// [259, vocab_size) learned merges in training order, and
// [vocab_size, vocab_size + 100) the sentinels S0..S99 at the top of the id
// space. Spaces become U+2581 before byte conversion; a literal U+2581 in
// the input is carried by the two bytes FF FE, which never occur in UTF-8,
// so decode(encode(s)) == s for every valid UTF-8 string.
class SubwordModel {
public:
    SubwordModel() = default;

    static SubwordModel parse(std::string_view text);
    static SubwordModel load(const std::string& path);
    std::string serialize() const;
    void save(const std::string& path) const;

    TokenIds encode(std::string_view text) const;
    std::string decode(std::span<const int> ids) const;

    // Number of trained pieces (specials, bytes, merges); sentinels excluded.
    int vocab_size() const { return static_cast<int>(pieces_.size()); }
    // Size of the id space seen by a model: vocab_size() + kNumSentinels.
    int num_ids() const { return vocab_size() + kNumSentinels; }
    int num_merges() const { return vocab_size() - kByteOffset - kNumBytes; }

    int sentinel(int k) const;
    bool is_sentinel(int id) const { return id >= vocab_size() && id < num_ids(); }
    int sentinel_index(int id) const { return id - vocab_size(); }

    // Raw bytes of a trained piece.
    const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
    // Printable form used in the model file.
    std::string display_piece(int id) const;
    int merge_rank(int id) const { return ranks_.at(static_cast<std::size_t>(id)); }
    int id_of(std::string_view raw_piece) const;

    std::uint64_t seed() const { return seed_; }
    std::string fingerprint() const;

private:
    friend SubwordModel train_subword(const std::vector<std::string>& corpus, int vocab_size, std::uint64_t seed);

    void add_piece(std::string raw, int rank);
    TokenIds encode_word(std::string_view word) const;

    std::vector<std::string> pieces_;
    std::vector<int> ranks_;
    std::unordered_map<std::string, int> piece_to_id_;
    std::uint64_t seed_ = 0;
};

// Trains merges greedily by pair frequency (ties: lexicographic on the
// pair's bytes). Merging stops at vocab_size or when no pair occurs at
// least twice. The seed is recorded in the model file; training itself
// has no random choices.
SubwordModel train_subword(const std::vector<std::string>& corpus, int vocab_size, std::uint64_t seed);

// Space-marker preprocessing shared by training and encoding.
std::string to_marked_bytes(std::string_view text);
std::string from_marked_bytes(std::string_view bytes);
std::vector<std::string_view> split_marked_words(std::string_view marked);

std::string sentinel_text(int k);

} // namespace xgkit
