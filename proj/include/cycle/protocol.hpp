#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cycle/data.hpp"
#include "cycle/metrics.hpp"
#include "cycle/models.hpp"
#include "cycle/numerics.hpp"

namespace cycle {

enum class Mode { Cycle, Vpdl, FedAvg, Standalone };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

/// Whose reputation gates a send from n to k.
enum class ShareGate {
    Sender,    // r_(n,k): the sender's own estimate of the receiver
    Receiver,  // r_(k,n): the receiver's estimate of the sender
};

std::string_view to_string(ShareGate gate);
ShareGate parse_share_gate(std::string_view text);

struct ProtocolConfig {
    Mode mode = Mode::Cycle;
    double alpha = 0.5;
    double tau_opt = 0.25;
    double tau_max = 0.75;
    double lambda0 = 1.0;
    int share_period = 5;  // R: forced sharing and scoring every R rounds
    int rounds = 50;
    int warmup_epochs = 10;
    double lr = 0.1;
    double lr_decay = 0.1;
    int lr_decay_every = 25;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    int batches_per_round = 0;  // 0 means one full local epoch per round
    double temperature = 1.0;
    ShareGate share_gate = ShareGate::Sender;
    bool shared_batch_schedule = false;  // every participant draws batches from one stream

    /// Throws ConfigError naming the offending field.
    void validate() const;
    double learning_rate(int round) const;
};

/// r_(n,k) estimates. Entries are empty until participant n first scores k.
class ReputationMatrix {
public:
    explicit ReputationMatrix(std::size_t n = 0);

    std::size_t size() const noexcept { return n_; }
    std::optional<double> get(std::size_t scorer, std::size_t scored) const;
    void set(std::size_t scorer, std::size_t scored, double value);
    /// Value used for weighting and sharing; unscored pairs count as fully trusted.
    double value_or_trust(std::size_t scorer, std::size_t scored) const;

    friend bool operator==(const ReputationMatrix&, const ReputationMatrix&) = default;

private:
    std::size_t n_;
    std::vector<double> values_;
    std::vector<char> scored_;
};

/// Misalignment of the CE and distillation gradients, (1 - cos) / 2; 0.5 when a norm vanishes.
double misalignment(std::span<const double> grad_ce, std::span<const double> grad_dl);

/// Piecewise-linear map from misalignment to raw reputation.
double soft_clip(double s, double tau_opt, double tau_max);

/// Momentum update; the first score is taken as-is.
double update_reputation(std::optional<double> previous, double raw, double alpha);

/// Forced share when round % period == 0, otherwise share iff u <= r for a fresh uniform u.
bool decide_share(double reputation, int round, int period, Rng& rng);

/// Predictions one participant sends another for the receiver's current round batch.
struct RoundMessage {
    std::size_t sender = 0;
    std::size_t receiver = 0;
    std::optional<Matrix> payload;  // rows on the simplex; empty means the sender withheld
};

struct ParticipantState {
    std::size_t id;
    ModelParams params;
    SgdMomentum optimizer;
    Batch train;
    Batch holdout;
    Rng batch_rng;
    Rng share_rng;
};

/// Sample order a participant trains on in one round. Its features form the
/// request every collaborator predicts on.
struct RoundRequest {
    std::vector<std::size_t> order;  // rows of the participant's train batch
    Matrix features;
};

RoundRequest draw_round_request(ParticipantState& state, const ProtocolConfig& config);

/// Messages from `sender` to every other participant for round t.
std::vector<RoundMessage> build_outbox(ParticipantState& sender, const std::vector<RoundRequest>& requests,
                                       const ReputationMatrix& reputations, const ProtocolConfig& config,
                                       int round);

struct ParticipantRoundResult {
    std::vector<double> dl_losses;  // per collaborator, mean over the round; 0 when absent
    std::vector<double> weights;    // lambda_(n,k) applied this round
    bool scored = false;
};

/// One participant's round: optional reputation scoring, then weighted CE + distillation SGD.
/// `inbox` holds at most one message per collaborator; missing collaborators count as absent.
ParticipantRoundResult participant_round(ParticipantState& state, const RoundRequest& request,
                                         const std::vector<RoundMessage>& inbox, ReputationMatrix& reputations,
                                         const ProtocolConfig& config, int round);

/// Raw per-run output of one protocol mode.
struct RunTrace {
    Mode mode = Mode::Cycle;
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> accuracy;  // [participant][round], percent, after each round
    std::vector<double> final_accuracy;         // percent
    std::vector<ReputationMatrix> reputations;  // one snapshot per round, CYCLE only
    std::vector<std::size_t> messages_sent;     // per round
    std::vector<ModelParams> final_params;
    std::vector<std::vector<ModelParams>> param_history;  // per round, only when recorded
};

struct ExperimentReport {
    RunTrace trace;
    GainRecord gains;
    FairnessSummary summary;
    FairnessSummary summary_population;
};

/// Participants start from zero weights and run warmup local epochs before collaborating.
std::vector<ParticipantState> init_participants(const Dataset& dataset, const DataPartition& partition,
                                                const ProtocolConfig& config, std::uint64_t seed);

/// Runs CYCLE, VPDL or STANDALONE rounds. Set record_params to keep every round's parameters.
RunTrace simulate_pdl(const Dataset& dataset, const DataPartition& partition, const ProtocolConfig& config,
                      std::uint64_t seed, bool record_params = false);

/// FedAvg for warmup_epochs + rounds federated rounds of one local epoch each.
RunTrace simulate_fedavg(const Dataset& dataset, const DataPartition& partition, const ProtocolConfig& config,
                         std::uint64_t seed, bool record_params = false);

/// Size-weighted parameter average.
ModelParams aggregate(const std::vector<ModelParams>& params, std::span<const double> weights);

/// Runs the configured mode plus, unless supplied, a standalone baseline with the same seed.
ExperimentReport run_protocol(const Dataset& dataset, const DataPartition& partition, const ProtocolConfig& config,
                              std::uint64_t seed, const RunTrace* standalone = nullptr);

ExperimentReport run_fedavg(const Dataset& dataset, const DataPartition& partition, const ProtocolConfig& config,
                            std::uint64_t seed, const RunTrace* standalone = nullptr);

/// N x N grid, row = scorer, column = scored; diagonal written as 1.
void write_reputation_csv(const ReputationMatrix& reputations, const std::filesystem::path& path);
std::vector<std::vector<double>> read_reputation_csv(const std::filesystem::path& path);

}  // namespace cycle
