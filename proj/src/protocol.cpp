#include "cycle/protocol.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include <fmt/format.h>

#include "cycle/error.hpp"

namespace cycle {

namespace {

constexpr std::uint64_t kBatchStreamBase = 1000;
constexpr std::uint64_t kShareStreamBase = 2000;

struct Teacher {
    std::size_t sender;
    double weight;  // lambda0 * lambda_(n,k)
    const Matrix* probs;
};

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
    std::vector<std::size_t> rows(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    return m.gather_rows(rows);
}

// Minibatch SGD over the request's sample order. Returns the mean distillation
// loss per teacher sender (indexed like `teachers`).
std::vector<double> train_on_request(ParticipantState& state, const RoundRequest& request,
                                     const std::vector<Teacher>& teachers, const ProtocolConfig& config,
                                     double lr) {
    std::vector<double> dl_losses(teachers.size(), 0.0);
    const std::size_t total = request.order.size();
    std::vector<int> labels(total);
    for (std::size_t i = 0; i < total; ++i) {
        labels[i] = state.train.labels[request.order[i]];
    }
    for (std::size_t begin = 0; begin < total; begin += config.batch_size) {
        const std::size_t end = std::min(total, begin + config.batch_size);
        const Matrix features = slice_rows(request.features, begin, end);
        const std::span<const int> batch_labels(labels.data() + begin, end - begin);

        LossGrad ce = ce_loss_grad(state.params, features, batch_labels);
        Vector grad = std::move(ce.grad);
        for (std::size_t t = 0; t < teachers.size(); ++t) {
            const Matrix probs = slice_rows(*teachers[t].probs, begin, end);
            const LossGrad dl = kl_distill_loss_grad(state.params, probs, features);
            dl_losses[t] += dl.loss * static_cast<double>(end - begin) / static_cast<double>(total);
            // A zero weight must leave the CE update bit-for-bit untouched.
            if (teachers[t].weight != 0.0) {
                for (std::size_t i = 0; i < grad.size(); ++i) {
                    grad[i] += teachers[t].weight * dl.grad[i];
                }
            }
        }
        state.optimizer.step(state.params, grad, lr);
    }
    return dl_losses;
}

RoundRequest full_epoch_request(ParticipantState& state) {
    RoundRequest request;
    request.order.resize(state.train.labels.size());
    std::iota(request.order.begin(), request.order.end(), std::size_t{0});
    state.batch_rng.shuffle(request.order);
    request.features = state.train.features.gather_rows(request.order);
    return request;
}

double percent_accuracy(const ParticipantState& state, const ModelParams& params) {
    return 100.0 * evaluate(params, state.holdout.features, state.holdout.labels);
}

std::vector<ParticipantState> make_participants(const Dataset& dataset, const DataPartition& partition,
                                                const ProtocolConfig& config, std::uint64_t seed) {
    validate_partition(dataset, partition);
    std::vector<ParticipantState> states;
    states.reserve(partition.size());
    for (std::size_t n = 0; n < partition.size(); ++n) {
        const auto& split = partition.participants[n];
        if (split.train.empty() || split.holdout.empty()) {
            throw DataError(fmt::format("participant {} needs nonempty train and holdout sets", n));
        }
        ModelParams params(dataset.num_classes(), dataset.dim(), config.temperature);
        SgdMomentum optimizer(params.size(), config.momentum);
        const std::uint64_t batch_stream = kBatchStreamBase + (config.shared_batch_schedule ? 0 : n);
        states.push_back(ParticipantState{n, std::move(params), std::move(optimizer), training_set(dataset, split),
                                          holdout_set(dataset, split), Rng(seed, batch_stream),
                                          Rng(seed, kShareStreamBase + n)});
    }
    return states;
}

void warm_up(std::vector<ParticipantState>& states, const ProtocolConfig& config) {
    for (int epoch = 0; epoch < config.warmup_epochs; ++epoch) {
        for (auto& state : states) {
            const RoundRequest request = full_epoch_request(state);
            train_on_request(state, request, {}, config, config.lr);
        }
    }
}

void check_participant_count(const DataPartition& partition) {
    if (partition.size() == 0) {
        throw ConfigError("partition has no participants");
    }
}

}  // namespace

std::string_view to_string(Mode mode) {
    switch (mode) {
        case Mode::Cycle:
            return "CYCLE";
        case Mode::Vpdl:
            return "VPDL";
        case Mode::FedAvg:
            return "FEDAVG";
        case Mode::Standalone:
            return "STANDALONE";
    }
    return "unknown";
}

Mode parse_mode(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "cycle") return Mode::Cycle;
    if (lower == "vpdl") return Mode::Vpdl;
    if (lower == "fedavg") return Mode::FedAvg;
    if (lower == "standalone") return Mode::Standalone;
    throw ConfigError(fmt::format("mode must be one of cycle, vpdl, fedavg, standalone; got '{}'", text));
}

std::string_view to_string(ShareGate gate) {
    return gate == ShareGate::Sender ? "sender" : "receiver";
}

ShareGate parse_share_gate(std::string_view text) {
    if (text == "sender") return ShareGate::Sender;
    if (text == "receiver") return ShareGate::Receiver;
    throw ConfigError(fmt::format("share_gate must be 'sender' or 'receiver', got '{}'", text));
}

void ProtocolConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError(fmt::format("alpha must be in (0, 1), got {}", alpha));
    }
    if (!(tau_opt >= 0.0)) {
        throw ConfigError(fmt::format("tau_opt must be >= 0, got {}", tau_opt));
    }
    if (!(tau_max <= 1.0)) {
        throw ConfigError(fmt::format("tau_max must be <= 1, got {}", tau_max));
    }
    if (!(tau_opt < tau_max)) {
        throw ConfigError("tau_opt must be < tau_max");
    }
    if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) {
        throw ConfigError(fmt::format("lambda0 must be finite and >= 0, got {}", lambda0));
    }
    if (share_period < 1) {
        throw ConfigError(fmt::format("share_period must be >= 1, got {}", share_period));
    }
    if (rounds < 0) {
        throw ConfigError(fmt::format("rounds must be >= 0, got {}", rounds));
    }
    if (warmup_epochs < 0) {
        throw ConfigError(fmt::format("warmup_epochs must be >= 0, got {}", warmup_epochs));
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw ConfigError(fmt::format("lr must be positive, got {}", lr));
    }
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
        throw ConfigError(fmt::format("lr_decay must be in (0, 1], got {}", lr_decay));
    }
    if (lr_decay_every < 1) {
        throw ConfigError(fmt::format("lr_decay_every must be >= 1, got {}", lr_decay_every));
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ConfigError(fmt::format("momentum must be in [0, 1), got {}", momentum));
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (batches_per_round < 0) {
        throw ConfigError(fmt::format("batches_per_round must be >= 0, got {}", batches_per_round));
    }
    if (!(temperature > 0.0)) {
        throw ConfigError(fmt::format("temperature must be positive, got {}", temperature));
    }
}

double ProtocolConfig::learning_rate(int round) const {
    return lr * std::pow(lr_decay, round / lr_decay_every);
}

ReputationMatrix::ReputationMatrix(std::size_t n) : n_(n), values_(n * n, 0.0), scored_(n * n, 0) {}

std::optional<double> ReputationMatrix::get(std::size_t scorer, std::size_t scored) const {
    if (scorer >= n_ || scored >= n_) {
        throw ParameterError(fmt::format("reputation index ({}, {}) out of range", scorer, scored));
    }
    if (scored_[scorer * n_ + scored] == 0) {
        return std::nullopt;
    }
    return values_[scorer * n_ + scored];
}

void ReputationMatrix::set(std::size_t scorer, std::size_t scored, double value) {
    if (scorer >= n_ || scored >= n_) {
        throw ParameterError(fmt::format("reputation index ({}, {}) out of range", scorer, scored));
    }
    if (!(value >= 0.0 && value <= 1.0)) {
        throw ParameterError(fmt::format("reputation must be in [0, 1], got {}", value));
    }
    values_[scorer * n_ + scored] = value;
    scored_[scorer * n_ + scored] = 1;
}

double ReputationMatrix::value_or_trust(std::size_t scorer, std::size_t scored) const {
    return get(scorer, scored).value_or(1.0);
}

double misalignment(std::span<const double> grad_ce, std::span<const double> grad_dl) {
    const auto cos = cosine(grad_ce, grad_dl);
    if (!cos) {
        return 0.5;
    }
    return (1.0 - *cos) / 2.0;
}

double soft_clip(double s, double tau_opt, double tau_max) {
    if (!(tau_opt < tau_max)) {
        throw ConfigError("tau_opt must be < tau_max");
    }
    return std::max(0.0, std::min(1.0, (s - tau_max) / (tau_opt - tau_max)));
}

double update_reputation(std::optional<double> previous, double raw, double alpha) {
    if (!previous) {
        return std::clamp(raw, 0.0, 1.0);
    }
    return std::clamp(alpha * *previous + (1.0 - alpha) * raw, 0.0, 1.0);
}

bool decide_share(double reputation, int round, int period, Rng& rng) {
    if (period < 1) {
        throw ConfigError(fmt::format("share period must be >= 1, got {}", period));
    }
    if (round % period == 0) {
        return true;
    }
    const double u = rng.uniform();
    return reputation > 0.0 && u <= reputation;
}

RoundRequest draw_round_request(ParticipantState& state, const ProtocolConfig& config) {
    RoundRequest request;
    std::vector<std::size_t> order(state.train.labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    state.batch_rng.shuffle(order);
    if (config.batches_per_round > 0) {
        const std::size_t limit = static_cast<std::size_t>(config.batches_per_round) * config.batch_size;
        if (order.size() > limit) {
            order.resize(limit);
        }
    }
    request.features = state.train.features.gather_rows(order);
    request.order = std::move(order);
    return request;
}

std::vector<RoundMessage> build_outbox(ParticipantState& sender, const std::vector<RoundRequest>& requests,
                                       const ReputationMatrix& reputations, const ProtocolConfig& config,
                                       int round) {
    std::vector<RoundMessage> outbox;
    for (std::size_t receiver = 0; receiver < requests.size(); ++receiver) {
        if (receiver == sender.id) {
            continue;
        }
        bool share = false;
        switch (config.mode) {
            case Mode::Vpdl:
                share = true;
                break;
            case Mode::Cycle: {
                const double gate = config.share_gate == ShareGate::Sender
                                        ? reputations.value_or_trust(sender.id, receiver)
                                        : reputations.value_or_trust(receiver, sender.id);
                share = decide_share(gate, round, config.share_period, sender.share_rng);
                break;
            }
            case Mode::FedAvg:
            case Mode::Standalone:
                share = false;
                break;
        }
        RoundMessage message{sender.id, receiver, std::nullopt};
        if (share) {
            message.payload = predict_proba(sender.params, requests[receiver].features);
        }
        outbox.push_back(std::move(message));
    }
    return outbox;
}

ParticipantRoundResult participant_round(ParticipantState& state, const RoundRequest& request,
                                         const std::vector<RoundMessage>& inbox, ReputationMatrix& reputations,
                                         const ProtocolConfig& config, int round) {
    const std::size_t n_participants = reputations.size();
    const std::size_t self = state.id;
    std::vector<const Matrix*> payloads(n_participants, nullptr);
    std::vector<bool> seen(n_participants, false);
    for (const auto& message : inbox) {
        if (message.receiver != self || message.sender >= n_participants || message.sender == self) {
            throw ParameterError(fmt::format("participant {} got a misaddressed message ({} -> {})", self,
                                             message.sender, message.receiver));
        }
        if (seen[message.sender]) {
            throw ParameterError(fmt::format("participant {} got two messages from {}", self, message.sender));
        }
        seen[message.sender] = true;
        if (message.payload) {
            payloads[message.sender] = &*message.payload;
        }
    }

    ParticipantRoundResult result;
    result.dl_losses.assign(n_participants, 0.0);
    result.weights.assign(n_participants, 0.0);

    if (config.mode == Mode::Cycle && round % config.share_period == 0) {
        std::vector<int> labels(request.order.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            labels[i] = state.train.labels[request.order[i]];
        }
        const Vector grad_ce = ce_loss_grad(state.params, request.features, labels).grad;
        for (std::size_t k = 0; k < n_participants; ++k) {
            if (payloads[k] == nullptr) {
                continue;
            }
            const Vector grad_dl = kl_distill_loss_grad(state.params, *payloads[k], request.features).grad;
            const double raw = soft_clip(misalignment(grad_ce, grad_dl), config.tau_opt, config.tau_max);
            reputations.set(self, k, update_reputation(reputations.get(self, k), raw, config.alpha));
        }
        result.scored = true;
    }

    std::vector<Teacher> teachers;
    for (std::size_t k = 0; k < n_participants; ++k) {
        if (payloads[k] == nullptr) {
            continue;
        }
        double lambda = 0.0;
        if (config.mode == Mode::Cycle) {
            lambda = reputations.value_or_trust(self, k);
        } else if (config.mode == Mode::Vpdl) {
            lambda = 1.0 / static_cast<double>(n_participants - 1);
        }
        result.weights[k] = lambda;
        teachers.push_back(Teacher{k, config.lambda0 * lambda, payloads[k]});
    }

    const auto losses = train_on_request(state, request, teachers, config, config.learning_rate(round));
    for (std::size_t t = 0; t < teachers.size(); ++t) {
        result.dl_losses[teachers[t].sender] = losses[t];
    }
    return result;
}

std::vector<ParticipantState> init_participants(const Dataset& dataset, const DataPartition& partition,
                                                const ProtocolConfig& config, std::uint64_t seed) {
    config.validate();
    check_participant_count(partition);
    auto states = make_participants(dataset, partition, config, seed);
    warm_up(states, config);
    return states;
}

RunTrace simulate_pdl(const Dataset& dataset, const DataPartition& partition, const ProtocolConfig& config,
                      std::uint64_t seed, bool record_params) {
    if (config.mode == Mode::FedAvg) {
        return simulate_fedavg(dataset, partition, config, seed, record_params);
    }
    auto states = init_participants(dataset, partition, config, seed);
    const std::size_t n = states.size();

    RunTrace trace;
    trace.mode = config.mode;
    trace.seed = seed;
    trace.accuracy.assign(n, {});
    ReputationMatrix reputations(n);

    for (int round = 0; round < config.rounds; ++round) {
        std::vector<RoundRequest> requests;
        requests.reserve(n);
        for (auto& state : states) {
            requests.push_back(draw_round_request(state, config));
        }
        // Every outbox is built from the pre-round parameters and reputations.
        std::vector<std::vector<RoundMessage>> inboxes(n);
        std::size_t sent = 0;
        for (auto& state : states) {
            for (auto& message : build_outbox(state, requests, reputations, config, round)) {
                sent += message.payload ? 1 : 0;
                inboxes[message.receiver].push_back(std::move(message));
            }
        }
        trace.messages_sent.push_back(sent);

        for (std::size_t i = 0; i < n; ++i) {
            participant_round(states[i], requests[i], inboxes[i], reputations, config, round);
        }
        for (std::size_t i = 0; i < n; ++i) {
            trace.accuracy[i].push_back(percent_accuracy(states[i], states[i].params));
        }
        if (config.mode == Mode::Cycle) {
            trace.reputations.push_back(reputations);
        }
        if (record_params) {
            std::vector<ModelParams> snapshot;
            for (const auto& state : states) {
                snapshot.push_back(state.params);
            }
            trace.param_history.push_back(std::move(snapshot));
        }
    }
    for (auto& state : states) {
        trace.final_accuracy.push_back(percent_accuracy(state, state.params));
        trace.final_params.push_back(state.params);
    }
    return trace;
}

ModelParams aggregate(const std::vector<ModelParams>& params, std::span<const double> weights) {
    if (params.empty() || params.size() != weights.size()) {
        throw ParameterError("aggregate needs one weight per parameter set");
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0)) {
        throw ParameterError("aggregate weights must have a positive sum");
    }
    Vector values(params.front().size(), 0.0);
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (params[p].size() != values.size()) {
            throw ParameterError("aggregate: parameter sets differ in size");
        }
        const double w = weights[p] / total;
        for (std::size_t i = 0; i < values.size(); ++i) {
            values[i] += w * params[p].values()[i];
        }
    }
    const auto& first = params.front();
    return ModelParams(first.num_classes(), first.dim(), std::move(values), first.temperature());
}

RunTrace simulate_fedavg(const Dataset& dataset, const DataPartition& partition, const ProtocolConfig& config,
                         std::uint64_t seed, bool record_params) {
    config.validate();
    check_participant_count(partition);
    auto states = make_participants(dataset, partition, config, seed);
    const std::size_t n = states.size();

    std::vector<double> sizes;
    for (const auto& state : states) {
        sizes.push_back(static_cast<double>(state.train.labels.size()));
    }
    ModelParams global = states.front().params;
    ReputationMatrix unused(n);

    RunTrace trace;
    trace.mode = Mode::FedAvg;
    trace.seed = seed;
    trace.accuracy.assign(n, {});

    ProtocolConfig local = config;
    local.mode = Mode::FedAvg;
    const int total_rounds = config.warmup_epochs + config.rounds;
    for (int step = 0; step < total_rounds; ++step) {
        const bool warmup = step < config.warmup_epochs;
        std::vector<ModelParams> locals;
        for (auto& state : states) {
            state.params = global;
            if (warmup) {
                const RoundRequest request = full_epoch_request(state);
                train_on_request(state, request, {}, local, config.lr);
            } else {
                const RoundRequest request = draw_round_request(state, local);
                participant_round(state, request, {}, unused, local, step - config.warmup_epochs);
            }
            locals.push_back(state.params);
        }
        global = aggregate(locals, sizes);
        if (warmup) {
            continue;
        }
        trace.messages_sent.push_back(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            trace.accuracy[i].push_back(percent_accuracy(states[i], global));
        }
        if (record_params) {
            trace.param_history.push_back(std::vector<ModelParams>(n, global));
        }
    }
    for (auto& state : states) {
        state.params = global;
        trace.final_accuracy.push_back(percent_accuracy(state, global));
        trace.final_params.push_back(global);
    }
    return trace;
}

namespace {

ExperimentReport assemble_report(RunTrace trace, const RunTrace& standalone) {
    ExperimentReport report;
    report.gains = gain_record(standalone.final_accuracy, trace.final_accuracy);
    report.summary = summarize(report.gains, SpreadConvention::Sample);
    report.summary_population = summarize(report.gains, SpreadConvention::Population);
    report.trace = std::move(trace);
    return report;
}

RunTrace standalone_baseline(const Dataset& dataset, const DataPartition& partition, const ProtocolConfig& config,
                             std::uint64_t seed) {
    ProtocolConfig baseline = config;
    baseline.mode = Mode::Standalone;
    return simulate_pdl(dataset, partition, baseline, seed);
}

}  // namespace

ExperimentReport run_protocol(const Dataset& dataset, const DataPartition& partition, const ProtocolConfig& config,
                              std::uint64_t seed, const RunTrace* standalone) {
    config.validate();
    if (config.mode == Mode::FedAvg) {
        return run_fedavg(dataset, partition, config, seed, standalone);
    }
    RunTrace trace = simulate_pdl(dataset, partition, config, seed);
    if (config.mode == Mode::Standalone) {
        const RunTrace copy = trace;
        return assemble_report(std::move(trace), copy);
    }
    if (standalone != nullptr) {
        return assemble_report(std::move(trace), *standalone);
    }
    return assemble_report(std::move(trace), standalone_baseline(dataset, partition, config, seed));
}

ExperimentReport run_fedavg(const Dataset& dataset, const DataPartition& partition, const ProtocolConfig& config,
                            std::uint64_t seed, const RunTrace* standalone) {
    config.validate();
    RunTrace trace = simulate_fedavg(dataset, partition, config, seed);
    if (standalone != nullptr) {
        return assemble_report(std::move(trace), *standalone);
    }
    return assemble_report(std::move(trace), standalone_baseline(dataset, partition, config, seed));
}

void write_reputation_csv(const ReputationMatrix& reputations, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    const std::size_t n = reputations.size();
    for (std::size_t row = 0; row < n; ++row) {
        std::string line;
        for (std::size_t col = 0; col < n; ++col) {
            double value = 1.0;
            if (row != col) {
                value = reputations.get(row, col).value_or(std::nan(""));
            }
            line += fmt::format("{}{:.6f}", col == 0 ? "" : ",", value);
        }
        out << line << '\n';
    }
    if (!out) {
        throw IoError(fmt::format("write failed for '{}'", path.string()));
    }
}

std::vector<std::vector<double>> read_reputation_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(fmt::format("cannot open '{}'", path.string()));
    }
    std::vector<std::vector<double>> grid;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        std::size_t start = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            const std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            double value = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
            if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
                throw DataError(fmt::format("{}:{}: bad reputation value '{}'", path.string(), line_no, cell));
            }
            row.push_back(value);
            if (comma == std::string::npos) {
                break;
            }
            start = comma + 1;
        }
        grid.push_back(std::move(row));
    }
    for (const auto& row : grid) {
        if (row.size() != grid.size()) {
            throw DataError(fmt::format("{}: reputation grid is not square", path.string()));
        }
    }
    return grid;
}

}  // namespace cycle
