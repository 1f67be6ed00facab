#pragma once

#include "xgkit/example.hpp"
#include "xgkit/random.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace xgkit {

enum class TaskKind {
    prefix_lm,
    span_corruption,
    iid_denoising,
    lm,
    missing_prefix,
    n_token_prefix,
    missing_n_token_prefix,
};

const std::vector<TaskKind>& all_tasks();
std::string task_name(TaskKind kind);
TaskKind parse_task(const std::string& name);

struct TaskParams {
    int sentinel_base = 0; // id of S0; sentinels are sentinel_base + k
    double span_rate = 0.15;
    double mean_span = 3.0;
    double iid_rate = 0.15;
    int prefix_n = 64; // n for the two n-token prefix tasks
    // Upper bound of the missing-prefix length as a fraction of the sequence.
    double missing_prefix_max_fraction = 0.5;
};

// A builder returns nullopt when the sequence is too short for the task
// (the skip-record signal).
std::optional<TaskExample> prefix_lm(const TokenIds& tokens, Rng& rng);
std::optional<TaskExample> span_corruption(const TokenIds& tokens, Rng& rng, int sentinel_base, double rate = 0.15,
                                           double mean_span = 3.0);
std::optional<TaskExample> iid_denoising(const TokenIds& tokens, Rng& rng, int sentinel_base, double rate = 0.15);
std::optional<TaskExample> lm_task(const TokenIds& tokens);
std::optional<TaskExample> missing_prefix(const TokenIds& tokens, Rng& rng, int sentinel_base,
                                          double max_fraction = 0.5);
std::optional<TaskExample> n_token_prefix(const TokenIds& tokens, int n = 64);
std::optional<TaskExample> missing_n_token_prefix(const TokenIds& tokens, int sentinel_base, int n = 64);

std::optional<TaskExample> build_task(TaskKind kind, const TokenIds& tokens, Rng& rng, const TaskParams& params);

// Splices target spans back into the input at matching sentinels. Throws
// CorruptionError when the sentinels do not line up.
TokenIds reconstruct(const TaskExample& ex, int sentinel_base, int num_sentinels = 100);

class ExampleStream {
public:
    virtual ~ExampleStream() = default;
    virtual TaskExample next() = 0;
    void skip(std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            next();
        }
    }
};

// Cycles through a fixed list, reshuffling at each epoch boundary.
class ListStream : public ExampleStream {
public:
    ListStream(std::vector<TaskExample> examples, std::uint64_t seed);
    TaskExample next() override;

private:
    std::vector<TaskExample> examples_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    Rng rng_;
};

// Applies task builders to a cycled document list. With several tasks the
// task is drawn uniformly per example; records that a builder skips are
// replaced by the next document.
class TaskStream : public ExampleStream {
public:
    TaskStream(std::vector<TokenIds> docs, std::string language, std::vector<TaskKind> tasks, TaskParams params,
               std::uint64_t seed);
    TaskExample next() override;

private:
    std::vector<TokenIds> docs_;
    std::string language_;
    std::vector<TaskKind> tasks_;
    TaskParams params_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    Rng rng_;
};

// Draws a (language, task) pair uniformly per example; used to train factorized prompts.
class MultiTaskStream : public ExampleStream {
public:
    MultiTaskStream(const std::map<std::string, std::vector<TokenIds>>& docs, std::vector<TaskKind> tasks,
                    TaskParams params, std::uint64_t seed);
    TaskExample next() override;

private:
    std::vector<std::unique_ptr<TaskStream>> streams_; // language-major, task-minor
    Rng rng_;
};

struct MixtureSpec {
    double kappa = 1.0; // percent of draws taken from the unsupervised streams
    std::string main;
    std::vector<std::string> unsup;
    std::uint64_t seed = 0;
};

// Each draw is unsupervised with probability kappa/100 (then uniform over
// the unsupervised streams), otherwise from the main stream. Single consumer.
class Mixture : public ExampleStream {
public:
    Mixture(MixtureSpec spec, std::map<std::string, std::shared_ptr<ExampleStream>> streams);
    TaskExample next() override;

    std::size_t unsup_draws() const { return unsup_draws_; }
    std::size_t main_draws() const { return main_draws_; }
    const MixtureSpec& spec() const { return spec_; }

private:
    MixtureSpec spec_;
    std::shared_ptr<ExampleStream> main_;
    std::vector<std::shared_ptr<ExampleStream>> unsup_;
    Rng rng_;
    std::size_t unsup_draws_ = 0;
    std::size_t main_draws_ = 0;
};

std::unique_ptr<Mixture> build_mixture(const MixtureSpec& spec,
                                       std::map<std::string, std::shared_ptr<ExampleStream>> streams);

} // namespace xgkit
