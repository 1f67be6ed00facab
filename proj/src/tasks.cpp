#include "xgkit/tasks.hpp"

#include "xgkit/errors.hpp"
#include "xgkit/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace xgkit {

namespace {

TaskExample make(TokenIds inputs, TokenIds targets, const char* task) {
    return TaskExample{std::move(inputs), std::move(targets), task, {}};
}

// Uniformly random composition of `total` into `parts` positive integers.
std::vector<std::size_t> random_composition(std::size_t total, std::size_t parts, Rng& rng) {
    std::vector<std::size_t> cuts(total - 1);
    std::iota(cuts.begin(), cuts.end(), std::size_t{1});
    // Partial Fisher-Yates: the first parts-1 entries become a uniform subset.
    for (std::size_t i = 0; i + 1 < parts; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(cuts.size() - i));
        std::swap(cuts[i], cuts[j]);
    }
    cuts.resize(parts - 1);
    std::sort(cuts.begin(), cuts.end());
    std::vector<std::size_t> out;
    std::size_t prev = 0;
    for (std::size_t c : cuts) {
        out.push_back(c - prev);
        prev = c;
    }
    out.push_back(total - prev);
    return out;
}

std::vector<std::size_t> make_order(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    return order;
}

} // namespace

const std::vector<TaskKind>& all_tasks() {
    static const std::vector<TaskKind> tasks = {
        TaskKind::prefix_lm,      TaskKind::span_corruption, TaskKind::iid_denoising,         TaskKind::lm,
        TaskKind::missing_prefix, TaskKind::n_token_prefix,  TaskKind::missing_n_token_prefix,
    };
    return tasks;
}

std::string task_name(TaskKind kind) {
    switch (kind) {
    case TaskKind::prefix_lm: return "prefix_lm";
    case TaskKind::span_corruption: return "span_corruption";
    case TaskKind::iid_denoising: return "iid_denoising";
    case TaskKind::lm: return "lm";
    case TaskKind::missing_prefix: return "missing_prefix";
    case TaskKind::n_token_prefix: return "n_token_prefix";
    case TaskKind::missing_n_token_prefix: return "missing_n_token_prefix";
    }
    return "unknown";
}

TaskKind parse_task(const std::string& name) {
    for (TaskKind k : all_tasks()) {
        if (task_name(k) == name) {
            return k;
        }
    }
    throw ConfigError("unknown task '" + name + "'");
}

std::optional<TaskExample> prefix_lm(const TokenIds& tokens, Rng& rng) {
    if (tokens.size() < 2) {
        return std::nullopt;
    }
    const auto p = static_cast<std::ptrdiff_t>(rng.uniform_int(1, static_cast<std::int64_t>(tokens.size()) - 1));
    return make(TokenIds(tokens.begin(), tokens.begin() + p), TokenIds(tokens.begin() + p, tokens.end()), "prefix_lm");
}

std::optional<TaskExample> span_corruption(const TokenIds& tokens, Rng& rng, int sentinel_base, double rate,
                                           double mean_span) {
    if (tokens.size() < 2) {
        return std::nullopt;
    }
    if (rate < 0.0 || rate > 1.0 || mean_span <= 0.0) {
        throw ConfigError("span corruption needs rate in [0,1] and a positive mean span");
    }
    const std::size_t n = tokens.size();
    const double expected_noise = rate * static_cast<double>(n);
    std::size_t num_noise = std::min(static_cast<std::size_t>(std::ceil(expected_noise - 1e-9)), n - 1);
    std::size_t num_spans = 0;
    if (num_noise > 0) {
        num_spans = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(expected_noise / mean_span)));
        num_spans = std::min({num_spans, num_noise, n - num_noise + 1, static_cast<std::size_t>(kNumSentinels - 1)});
    }
    TaskExample ex = make({}, {}, "span_corruption");
    if (num_spans == 0) {
        ex.inputs = tokens;
        ex.targets = {sentinel_base};
        return ex;
    }
    const auto noise_lengths = random_composition(num_noise, num_spans, rng);
    // Keep-gaps: leading and trailing may be empty, interior gaps hold at least one token.
    const std::size_t keep = n - num_noise;
    const std::size_t free_keep = keep - (num_spans - 1);
    auto padded = random_composition(free_keep + num_spans + 1, num_spans + 1, rng);
    std::vector<std::size_t> gaps;
    for (std::size_t i = 0; i < padded.size(); ++i) {
        std::size_t g = padded[i] - 1;
        if (i > 0 && i < num_spans) {
            g += 1;
        }
        gaps.push_back(g);
    }
    std::size_t pos = 0;
    for (std::size_t s = 0; s < num_spans; ++s) {
        ex.inputs.insert(ex.inputs.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos),
                         tokens.begin() + static_cast<std::ptrdiff_t>(pos + gaps[s]));
        pos += gaps[s];
        const int sentinel = sentinel_base + static_cast<int>(s);
        ex.inputs.push_back(sentinel);
        ex.targets.push_back(sentinel);
        ex.targets.insert(ex.targets.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos),
                          tokens.begin() + static_cast<std::ptrdiff_t>(pos + noise_lengths[s]));
        pos += noise_lengths[s];
    }
    ex.inputs.insert(ex.inputs.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos), tokens.end());
    ex.targets.push_back(sentinel_base + static_cast<int>(num_spans));
    return ex;
}

std::optional<TaskExample> iid_denoising(const TokenIds& tokens, Rng& rng, int sentinel_base, double rate) {
    if (tokens.empty()) {
        return std::nullopt;
    }
    if (rate < 0.0 || rate > 1.0) {
        throw ConfigError("i.i.d. denoising rate must be in [0,1]");
    }
    TaskExample ex = make({}, {}, "iid_denoising");
    int runs = 0;
    bool in_run = false;
    for (int t : tokens) {
        // rate 1 must drop every token, so compare against the closed interval.
        const bool drop = runs < kNumSentinels - 1 || in_run ? (rate >= 1.0 || rng.uniform01() < rate) : false;
        if (drop) {
            if (!in_run) {
                ex.inputs.push_back(sentinel_base + runs);
                ex.targets.push_back(sentinel_base + runs);
                ++runs;
                in_run = true;
            }
            ex.targets.push_back(t);
        } else {
            ex.inputs.push_back(t);
            in_run = false;
        }
    }
    ex.targets.push_back(sentinel_base + runs);
    return ex;
}

std::optional<TaskExample> lm_task(const TokenIds& tokens) {
    if (tokens.empty()) {
        return std::nullopt;
    }
    return make({}, tokens, "lm");
}

std::optional<TaskExample> missing_prefix(const TokenIds& tokens, Rng& rng, int sentinel_base, double max_fraction) {
    if (tokens.size() < 2) {
        return std::nullopt;
    }
    const auto hi = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(max_fraction * static_cast<double>(tokens.size()))));
    const auto p = static_cast<std::ptrdiff_t>(rng.uniform_int(1, std::min<std::int64_t>(hi, static_cast<std::int64_t>(tokens.size()) - 1)));
    TaskExample ex = make({sentinel_base}, {sentinel_base}, "missing_prefix");
    ex.inputs.insert(ex.inputs.end(), tokens.begin() + p, tokens.end());
    ex.targets.insert(ex.targets.end(), tokens.begin(), tokens.begin() + p);
    return ex;
}

std::optional<TaskExample> n_token_prefix(const TokenIds& tokens, int n) {
    if (tokens.empty() || n < 1) {
        return std::nullopt;
    }
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(n), tokens.size());
    return make(tokens, TokenIds(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(k)), "n_token_prefix");
}

std::optional<TaskExample> missing_n_token_prefix(const TokenIds& tokens, int sentinel_base, int n) {
    if (n < 1 || tokens.size() <= static_cast<std::size_t>(n)) {
        return std::nullopt;
    }
    TaskExample ex = make({sentinel_base}, {sentinel_base}, "missing_n_token_prefix");
    ex.inputs.insert(ex.inputs.end(), tokens.begin() + n, tokens.end());
    ex.targets.insert(ex.targets.end(), tokens.begin(), tokens.begin() + n);
    return ex;
}

std::optional<TaskExample> build_task(TaskKind kind, const TokenIds& tokens, Rng& rng, const TaskParams& params) {
    switch (kind) {
    case TaskKind::prefix_lm: return prefix_lm(tokens, rng);
    case TaskKind::span_corruption:
        return span_corruption(tokens, rng, params.sentinel_base, params.span_rate, params.mean_span);
    case TaskKind::iid_denoising: return iid_denoising(tokens, rng, params.sentinel_base, params.iid_rate);
    case TaskKind::lm: return lm_task(tokens);
    case TaskKind::missing_prefix:
        return missing_prefix(tokens, rng, params.sentinel_base, params.missing_prefix_max_fraction);
    case TaskKind::n_token_prefix: return n_token_prefix(tokens, params.prefix_n);
    case TaskKind::missing_n_token_prefix: return missing_n_token_prefix(tokens, params.sentinel_base, params.prefix_n);
    }
    return std::nullopt;
}

TokenIds reconstruct(const TaskExample& ex, int sentinel_base, int num_sentinels) {
    auto sentinel_index = [&](int id) { return id >= sentinel_base && id < sentinel_base + num_sentinels ? id - sentinel_base : -1; };
    // Split targets into spans keyed by their leading sentinel.
    std::vector<TokenIds> spans;
    if (ex.targets.empty() || sentinel_index(ex.targets.front()) != 0) {
        throw CorruptionError("targets must start with sentinel 0");
    }
    for (int t : ex.targets) {
        const int k = sentinel_index(t);
        if (k >= 0) {
            if (k != static_cast<int>(spans.size())) {
                throw CorruptionError("target sentinels out of order");
            }
            spans.emplace_back();
        } else {
            spans.back().push_back(t);
        }
    }
    if (!spans.back().empty()) {
        throw CorruptionError("targets must end with a terminal sentinel");
    }
    const int terminal = static_cast<int>(spans.size()) - 1;
    TokenIds out;
    int expected = 0;
    for (int t : ex.inputs) {
        const int k = sentinel_index(t);
        if (k < 0) {
            out.push_back(t);
            continue;
        }
        if (k != expected || k >= terminal) {
            throw CorruptionError("input sentinel " + std::to_string(k) + " does not match the targets");
        }
        out.insert(out.end(), spans[static_cast<std::size_t>(k)].begin(), spans[static_cast<std::size_t>(k)].end());
        ++expected;
    }
    if (expected != terminal) {
        throw CorruptionError("inputs use " + std::to_string(expected) + " sentinels but targets define " +
                              std::to_string(terminal));
    }
    return out;
}

ListStream::ListStream(std::vector<TaskExample> examples, std::uint64_t seed) : examples_(std::move(examples)), rng_(seed) {
    if (examples_.empty()) {
        throw ConfigError("example list is empty");
    }
    order_ = make_order(examples_.size(), rng_);
}

TaskExample ListStream::next() {
    if (cursor_ == order_.size()) {
        order_ = make_order(examples_.size(), rng_);
        cursor_ = 0;
    }
    return examples_[order_[cursor_++]];
}

TaskStream::TaskStream(std::vector<TokenIds> docs, std::string language, std::vector<TaskKind> tasks, TaskParams params,
                       std::uint64_t seed)
    : docs_(std::move(docs)), language_(std::move(language)), tasks_(std::move(tasks)), params_(params), rng_(seed) {
    if (docs_.empty() || tasks_.empty()) {
        throw ConfigError("task stream for '" + language_ + "' needs documents and at least one task");
    }
    order_ = make_order(docs_.size(), rng_);
}

TaskExample TaskStream::next() {
    // A full pass of skipped records means no document fits the task.
    for (std::size_t attempt = 0; attempt <= docs_.size(); ++attempt) {
        if (cursor_ == order_.size()) {
            order_ = make_order(docs_.size(), rng_);
            cursor_ = 0;
        }
        const TaskKind kind = tasks_.size() == 1 ? tasks_.front() : tasks_[static_cast<std::size_t>(rng_.below(tasks_.size()))];
        const TokenIds& doc = docs_[order_[cursor_++]];
        if (auto ex = build_task(kind, doc, rng_, params_)) {
            ex->language = language_;
            return std::move(*ex);
        }
    }
    throw ConfigError("no document of '" + language_ + "' is long enough for the requested task");
}

MultiTaskStream::MultiTaskStream(const std::map<std::string, std::vector<TokenIds>>& docs, std::vector<TaskKind> tasks,
                                 TaskParams params, std::uint64_t seed)
    : rng_(seed) {
    if (docs.empty() || tasks.empty()) {
        throw ConfigError("multi-task stream needs languages and tasks");
    }
    for (const auto& [lang, lang_docs] : docs) {
        for (TaskKind t : tasks) {
            streams_.push_back(std::make_unique<TaskStream>(lang_docs, lang, std::vector<TaskKind>{t}, params,
                                                            Rng::derive(seed, lang + "/" + task_name(t))));
        }
    }
}

TaskExample MultiTaskStream::next() {
    return streams_[static_cast<std::size_t>(rng_.below(streams_.size()))]->next();
}

Mixture::Mixture(MixtureSpec spec, std::map<std::string, std::shared_ptr<ExampleStream>> streams)
    : spec_(std::move(spec)), rng_(spec_.seed) {
    if (!(spec_.kappa >= 0.0 && spec_.kappa <= 100.0)) {
        throw ConfigError("mixing rate kappa must be within [0, 100]");
    }
    auto find = [&streams](const std::string& name) {
        const auto it = streams.find(name);
        if (it == streams.end() || !it->second) {
            throw ConfigError("unknown stream '" + name + "'");
        }
        return it->second;
    };
    main_ = find(spec_.main);
    for (const auto& name : spec_.unsup) {
        unsup_.push_back(find(name));
    }
    if (unsup_.empty() && spec_.kappa > 0.0) {
        throw ConfigError("kappa > 0 needs at least one unsupervised stream");
    }
}

TaskExample Mixture::next() {
    const double u = rng_.uniform01();
    if (u * 100.0 < spec_.kappa) {
        ++unsup_draws_;
        const auto i = unsup_.size() == 1 ? 0 : static_cast<std::size_t>(rng_.below(unsup_.size()));
        return unsup_[i]->next();
    }
    ++main_draws_;
    return main_->next();
}

std::unique_ptr<Mixture> build_mixture(const MixtureSpec& spec, std::map<std::string, std::shared_ptr<ExampleStream>> streams) {
    return std::make_unique<Mixture>(spec, std::move(streams));
}

} // namespace xgkit
