#include "xgkit/tokenizer.hpp"

#include "xgkit/errors.hpp"
#include "xgkit/hash.hpp"
#include "xgkit/utf8.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace xgkit {

namespace {

constexpr std::string_view kMagic = "SPKIT1";
constexpr std::string_view kMarker = "\xE2\x96\x81"; // U+2581
constexpr std::string_view kLiteralMarker = "\xFF\xFE";

std::string escape_piece(std::string_view raw) {
    std::string out;
    std::size_t i = 0;
    auto hex_byte = [&out](unsigned char b) {
        static constexpr char digits[] = "0123456789ABCDEF";
        out += "\\x";
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    };
    while (i < raw.size()) {
        const auto b = static_cast<unsigned char>(raw[i]);
        if (b == '\\') {
            out += "\\\\";
            ++i;
            continue;
        }
        if (b < 0x20 || b == 0x7F) {
            hex_byte(b);
            ++i;
            continue;
        }
        const std::size_t len = utf8::valid_sequence_length(raw, i);
        if (len == 0) {
            hex_byte(b);
            ++i;
            continue;
        }
        out.append(raw.substr(i, len));
        i += len;
    }
    return out;
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') {
        return c - '0';
    }
    if (c >= 'A' && c <= 'F') {
        return c - 'A' + 10;
    }
    if (c >= 'a' && c <= 'f') {
        return c - 'a' + 10;
    }
    return -1;
}

std::string unescape_piece(std::string_view text, int line_no) {
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '\\') {
            out.push_back(text[i]);
            continue;
        }
        if (i + 1 < text.size() && text[i + 1] == '\\') {
            out.push_back('\\');
            ++i;
            continue;
        }
        if (i + 3 < text.size() && text[i + 1] == 'x') {
            const int hi = hex_value(text[i + 2]);
            const int lo = hex_value(text[i + 3]);
            if (hi >= 0 && lo >= 0) {
                out.push_back(static_cast<char>(hi * 16 + lo));
                i += 3;
                continue;
            }
        }
        throw FormatError("bad escape in tokenizer line " + std::to_string(line_no));
    }
    return out;
}

std::uint64_t pair_key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

} // namespace

std::string sentinel_text(int k) {
    return "\xE2\x9F\xA8" "extra_id_" + std::to_string(k) + "\xE2\x9F\xA9";
}

std::string to_marked_bytes(std::string_view text) {
    std::string out;
    out.reserve(text.size() + 8);
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == ' ') {
            out.append(kMarker);
            ++i;
        } else if (text.substr(i, kMarker.size()) == kMarker) {
            out.append(kLiteralMarker);
            i += kMarker.size();
        } else {
            out.push_back(text[i]);
            ++i;
        }
    }
    return out;
}

std::string from_marked_bytes(std::string_view bytes) {
    std::string out;
    out.reserve(bytes.size());
    std::size_t i = 0;
    while (i < bytes.size()) {
        if (bytes.substr(i, kMarker.size()) == kMarker) {
            out.push_back(' ');
            i += kMarker.size();
        } else if (bytes.substr(i, kLiteralMarker.size()) == kLiteralMarker) {
            out.append(kMarker);
            i += kLiteralMarker.size();
        } else {
            out.push_back(bytes[i]);
            ++i;
        }
    }
    return out;
}

std::vector<std::string_view> split_marked_words(std::string_view marked) {
    std::vector<std::string_view> words;
    std::size_t start = 0;
    std::size_t pos = marked.find(kMarker, 1);
    while (pos != std::string_view::npos) {
        words.push_back(marked.substr(start, pos - start));
        start = pos;
        pos = marked.find(kMarker, pos + kMarker.size());
    }
    if (start < marked.size()) {
        words.push_back(marked.substr(start));
    }
    return words;
}

void SubwordModel::add_piece(std::string raw, int rank) {
    // Specials are not reachable through byte concatenation, so they stay out of the lookup table.
    if (pieces_.size() >= static_cast<std::size_t>(kNumSpecial)) {
        piece_to_id_.emplace(raw, static_cast<int>(pieces_.size()));
    }
    pieces_.push_back(std::move(raw));
    ranks_.push_back(rank);
}

int SubwordModel::id_of(std::string_view raw_piece) const {
    const auto it = piece_to_id_.find(std::string(raw_piece));
    return it == piece_to_id_.end() ? -1 : it->second;
}

int SubwordModel::sentinel(int k) const {
    if (k < 0 || k >= kNumSentinels) {
        throw InputError("sentinel index out of range: " + std::to_string(k));
    }
    return vocab_size() + k;
}

std::string SubwordModel::display_piece(int id) const {
    if (id == kPadId) {
        return "<pad>";
    }
    if (id == kEosId) {
        return "<eos>";
    }
    if (id == kUnkId) {
        return "<unk>";
    }
    if (is_sentinel(id)) {
        return sentinel_text(sentinel_index(id));
    }
    return escape_piece(piece(id));
}

TokenIds SubwordModel::encode_word(std::string_view word) const {
    TokenIds ids;
    ids.reserve(word.size());
    for (char c : word) {
        ids.push_back(kByteOffset + static_cast<unsigned char>(c));
    }
    std::string scratch;
    while (ids.size() > 1) {
        int best_rank = std::numeric_limits<int>::max();
        std::size_t best_pos = 0;
        int best_id = -1;
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
            scratch = pieces_[static_cast<std::size_t>(ids[i])];
            scratch += pieces_[static_cast<std::size_t>(ids[i + 1])];
            const auto it = piece_to_id_.find(scratch);
            if (it == piece_to_id_.end()) {
                continue;
            }
            const int rank = ranks_[static_cast<std::size_t>(it->second)];
            if (rank >= 0 && rank < best_rank) {
                best_rank = rank;
                best_pos = i;
                best_id = it->second;
            }
        }
        if (best_id < 0) {
            break;
        }
        ids[best_pos] = best_id;
        ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
    }
    return ids;
}

TokenIds SubwordModel::encode(std::string_view text) const {
    TokenIds out;
    const std::string marked = to_marked_bytes(text);
    for (std::string_view word : split_marked_words(marked)) {
        const TokenIds w = encode_word(word);
        out.insert(out.end(), w.begin(), w.end());
    }
    return out;
}

std::string SubwordModel::decode(std::span<const int> ids) const {
    std::string out;
    std::string run;
    for (int id : ids) {
        if (id < 0 || id >= num_ids()) {
            throw InputError("token id out of range: " + std::to_string(id));
        }
        if (id >= kByteOffset && id < vocab_size()) {
            run += pieces_[static_cast<std::size_t>(id)];
            continue;
        }
        out += utf8::encode(utf8::decode(from_marked_bytes(run)));
        run.clear();
        if (is_sentinel(id)) {
            out += sentinel_text(sentinel_index(id));
        } else if (id == kUnkId) {
            out += "\xE2\x81\x87"; // U+2047
        }
    }
    // Stray byte pieces from a model become U+FFFD, so the output is always valid UTF-8.
    out += utf8::encode(utf8::decode(from_marked_bytes(run)));
    return out;
}

std::string SubwordModel::serialize() const {
    std::ostringstream os;
    os << kMagic << '\t' << vocab_size() << '\t' << seed_ << '\n';
    for (int id = 0; id < vocab_size(); ++id) {
        os << display_piece(id) << '\t' << ranks_[static_cast<std::size_t>(id)] << '\n';
    }
    return os.str();
}

void SubwordModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    out << serialize();
}

SubwordModel SubwordModel::parse(std::string_view text) {
    std::istringstream is{std::string(text)};
    std::string line;
    if (!std::getline(is, line)) {
        throw FormatError("empty tokenizer file");
    }
    std::istringstream header(line);
    std::string magic;
    long long declared = 0;
    unsigned long long seed = 0;
    if (!(header >> magic >> declared >> seed) || magic != kMagic) {
        throw FormatError("tokenizer header must be 'SPKIT1<TAB>vocab_size<TAB>seed'");
    }
    if (declared < kByteOffset + kNumBytes) {
        throw FormatError("tokenizer vocab_size below mandatory piece count");
    }
    SubwordModel m;
    m.seed_ = seed;
    int line_no = 1;
    int next_rank = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos) {
            throw FormatError("missing rank column on tokenizer line " + std::to_string(line_no));
        }
        const int id = m.vocab_size();
        int rank = 0;
        try {
            rank = std::stoi(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw FormatError("bad rank on tokenizer line " + std::to_string(line_no));
        }
        std::string raw;
        if (id < kNumSpecial) {
            raw = std::string(line.substr(0, tab));
        } else {
            raw = unescape_piece(std::string_view(line).substr(0, tab), line_no);
        }
        if (id >= kByteOffset && id < kByteOffset + kNumBytes) {
            if (raw.size() != 1 || static_cast<unsigned char>(raw[0]) != id - kByteOffset || rank != -1) {
                throw FormatError("byte piece expected at id " + std::to_string(id));
            }
        } else if (id >= kByteOffset + kNumBytes) {
            if (rank != next_rank || raw.size() < 2) {
                throw FormatError("merge ranks must be consecutive from 0 (line " + std::to_string(line_no) + ")");
            }
            ++next_rank;
        }
        if (m.piece_to_id_.contains(raw)) {
            throw FormatError("duplicate piece on tokenizer line " + std::to_string(line_no));
        }
        m.add_piece(std::move(raw), rank);
    }
    if (m.vocab_size() != declared) {
        throw FormatError("tokenizer declares " + std::to_string(declared) + " pieces but lists " +
                          std::to_string(m.vocab_size()));
    }
    return m;
}

SubwordModel SubwordModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read tokenizer " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string SubwordModel::fingerprint() const {
    return hash_bytes(serialize());
}

SubwordModel train_subword(const std::vector<std::string>& corpus, int vocab_size, std::uint64_t seed) {
    if (corpus.empty()) {
        throw ConfigError("tokenizer corpus is empty");
    }
    if (vocab_size < kByteOffset + kNumBytes) {
        throw ConfigError("vocab_size " + std::to_string(vocab_size) + " is below the " +
                          std::to_string(kByteOffset + kNumBytes) + " mandatory pieces");
    }
    SubwordModel m;
    m.seed_ = seed;
    for (int i = 0; i < kNumSpecial; ++i) {
        m.add_piece(i == kPadId ? "<pad>" : i == kEosId ? "<eos>" : "<unk>", -1);
    }
    for (int b = 0; b < kNumBytes; ++b) {
        m.add_piece(std::string(1, static_cast<char>(b)), -1);
    }

    // Ordered map so the word list (and everything derived) is independent of hashing.
    std::map<std::string, long long> word_counts;
    for (const auto& text : corpus) {
        const std::string marked = to_marked_bytes(text);
        for (std::string_view w : split_marked_words(marked)) {
            ++word_counts[std::string(w)];
        }
    }
    std::vector<TokenIds> words;
    std::vector<long long> counts;
    for (const auto& [w, c] : word_counts) {
        TokenIds ids;
        for (char ch : w) {
            ids.push_back(kByteOffset + static_cast<unsigned char>(ch));
        }
        words.push_back(std::move(ids));
        counts.push_back(c);
    }

    int rank = 0;
    std::unordered_map<std::uint64_t, long long> pair_counts;
    while (m.vocab_size() < vocab_size) {
        pair_counts.clear();
        for (std::size_t w = 0; w < words.size(); ++w) {
            const auto& ids = words[w];
            for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
                pair_counts[pair_key(ids[i], ids[i + 1])] += counts[w];
            }
        }
        long long best_count = 1;
        int best_a = -1;
        int best_b = -1;
        for (const auto& [key, c] : pair_counts) {
            const int a = static_cast<int>(key >> 32);
            const int b = static_cast<int>(key & 0xFFFFFFFFu);
            bool better = c > best_count;
            if (!better && c == best_count && best_a >= 0) {
                const auto& pa = m.pieces_[static_cast<std::size_t>(a)];
                const auto& pb = m.pieces_[static_cast<std::size_t>(b)];
                const auto& qa = m.pieces_[static_cast<std::size_t>(best_a)];
                const auto& qb = m.pieces_[static_cast<std::size_t>(best_b)];
                better = pa < qa || (pa == qa && pb < qb);
            }
            if (better) {
                best_count = c;
                best_a = a;
                best_b = b;
            }
        }
        if (best_a < 0) {
            break; // no pair occurs at least twice
        }
        std::string merged = m.pieces_[static_cast<std::size_t>(best_a)] + m.pieces_[static_cast<std::size_t>(best_b)];
        int merged_id = m.id_of(merged);
        if (merged_id < 0) {
            merged_id = m.vocab_size();
            m.add_piece(std::move(merged), rank++);
        }
        for (auto& ids : words) {
            for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
                if (ids[i] == best_a && ids[i + 1] == best_b) {
                    ids[i] = merged_id;
                    ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(i) + 1);
                }
            }
        }
    }
    return m;
}

} // namespace xgkit
