#include "xgkit/textops.hpp"

#include "xgkit/errors.hpp"
#include "xgkit/utf8.hpp"

#include <algorithm>

namespace xgkit {

namespace {

struct Removal {
    std::size_t unit_len = 0;
    std::size_t copies = 0;
};

Removal best_removal(const std::vector<char32_t>& s) {
    const std::size_t n = s.size();
    Removal best;
    std::size_t best_removed = 0;
    for (std::size_t len = 1; 2 * len <= n; ++len) {
        std::size_t k = 1;
        // Count how many copies of the final unit sit back to back at the end.
        while ((k + 1) * len <= n &&
               std::equal(s.end() - static_cast<std::ptrdiff_t>(len), s.end(),
                          s.end() - static_cast<std::ptrdiff_t>((k + 1) * len))) {
            ++k;
        }
        if (k < 2) {
            continue;
        }
        const std::size_t removed = (k - 1) * len;
        if (removed > best_removed || (removed == best_removed && len > best.unit_len)) {
            best_removed = removed;
            best = {len, k};
        }
    }
    return best;
}

} // namespace

std::pair<std::string, TrimReport> trim_trailing_repeats(std::string_view text) {
    std::vector<char32_t> s = utf8::decode(text);
    TrimReport report;
    report.original_len = s.size();
    while (true) {
        const Removal r = best_removal(s);
        if (r.copies < 2) {
            break;
        }
        if (report.repetitions_removed == 0) {
            report.removed_unit = utf8::encode(std::vector<char32_t>(s.end() - static_cast<std::ptrdiff_t>(r.unit_len), s.end()));
        }
        report.repetitions_removed += static_cast<int>(r.copies - 1);
        s.resize(s.size() - (r.copies - 1) * r.unit_len);
    }
    report.trimmed_len = s.size();
    if (report.repetitions_removed == 0) {
        return {std::string(text), report};
    }
    return {utf8::encode(s), report};
}

std::string lead_n(const SummExample& ex, const SubwordModel& model, int n) {
    if (n < 1) {
        throw ConfigError("lead_n needs n >= 1");
    }
    TokenIds ids = model.encode(ex.document);
    if (ids.size() > static_cast<std::size_t>(n)) {
        ids.resize(static_cast<std::size_t>(n));
    }
    return model.decode(ids);
}

} // namespace xgkit
