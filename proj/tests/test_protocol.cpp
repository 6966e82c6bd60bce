#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cycle/error.hpp"
#include "cycle/protocol.hpp"
#include "oracles.hpp"

using namespace cycle;

namespace {

struct Small {
    Dataset dataset;
    DataPartition partition;
};

Small small_world(std::size_t n, std::uint64_t seed = 1, std::size_t per_class = 60) {
    Rng rng(seed, 1);
    Dataset ds = make_blobs(3, 6, per_class, 0.1, rng);
    Rng split_rng(seed, 2);
    DataPartition part = split_homogeneous(ds, n, 0.2, split_rng);
    return {std::move(ds), std::move(part)};
}

ProtocolConfig quick(Mode mode) {
    ProtocolConfig c;
    c.mode = mode;
    c.rounds = 6;
    c.warmup_epochs = 1;
    c.share_period = 2;
    c.batch_size = 16;
    return c;
}

}  // namespace

TEST_CASE("misalignment examples") {
    const std::vector<double> g{1.0, -2.0, 0.5};
    const std::vector<double> neg{-1.0, 2.0, -0.5};
    CHECK(misalignment(g, g) == doctest::Approx(0.0));
    CHECK(misalignment(g, neg) == doctest::Approx(1.0));
    CHECK(misalignment(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 3.0}) == doctest::Approx(0.5));
    CHECK(misalignment(g, std::vector<double>{0.0, 0.0, 0.0}) == 0.5);
    CHECK_THROWS(misalignment(g, std::vector<double>{1.0}));
}

TEST_CASE("soft_clip examples") {
    CHECK(soft_clip(0.25, 0.25, 0.75) == doctest::Approx(1.0));
    CHECK(soft_clip(0.75, 0.25, 0.75) == doctest::Approx(0.0));
    CHECK(soft_clip(0.5, 0.25, 0.75) == doctest::Approx(0.5));
    CHECK(soft_clip(0.0, 0.25, 0.75) == 1.0);
    CHECK(soft_clip(1.0, 0.25, 0.75) == 0.0);
    try {
        soft_clip(0.5, 0.8, 0.75);
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()) == "tau_opt must be < tau_max");
    }
}

TEST_CASE("update_reputation examples") {
    CHECK(update_reputation(std::nullopt, 0.8, 0.5) == 0.8);
    CHECK(update_reputation(1.0, 0.0, 0.5) == 0.5);
    double r = 1.0;
    double gap = 0.7;
    for (int i = 0; i < 30; ++i) {
        r = update_reputation(r, 0.3, 0.5);
        CHECK(std::abs(r - 0.3) == doctest::Approx(gap / 2.0).epsilon(1e-9));
        gap /= 2.0;
    }
    CHECK(r == doctest::Approx(0.3).epsilon(1e-8));
}

TEST_CASE("decide_share") {
    Rng rng(3, 0);
    for (int t : {0, 5, 10}) CHECK(decide_share(0.0, t, 5, rng));
    for (int t = 1; t < 200; ++t) {
        if (t % 5 != 0) {
            CHECK_FALSE(decide_share(0.0, t, 5, rng));
            CHECK(decide_share(1.0, t, 5, rng));
        }
    }
    int shared = 0;
    for (int i = 0; i < 10000; ++i) shared += decide_share(0.3, 1, 5, rng);
    CHECK(shared / 10000.0 == doctest::Approx(0.3).epsilon(0.05));
    CHECK_THROWS_AS(decide_share(0.5, 1, 0, rng), ConfigError);
}

TEST_CASE("reputation matrix") {
    ReputationMatrix m(3);
    CHECK_FALSE(m.get(0, 1).has_value());
    CHECK(m.value_or_trust(0, 1) == 1.0);
    m.set(0, 1, 0.25);
    CHECK(*m.get(0, 1) == 0.25);
    CHECK_FALSE(m.get(1, 0).has_value());
    CHECK_THROWS(m.set(0, 1, 1.5));
    CHECK_THROWS(m.set(0, 3, 0.5));
}

TEST_CASE("protocol config validation names the field") {
    ProtocolConfig c;
    c.validate();
    auto message = [](ProtocolConfig bad) {
        try {
            bad.validate();
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    c.tau_opt = 0.8;
    CHECK(message(c) == "tau_opt must be < tau_max");
    c = ProtocolConfig{};
    c.alpha = 1.0;
    CHECK(message(c).find("alpha") != std::string::npos);
    c = ProtocolConfig{};
    c.share_period = 0;
    CHECK(message(c).find("share_period") != std::string::npos);
    c = ProtocolConfig{};
    c.lambda0 = -1.0;
    CHECK(message(c).find("lambda0") != std::string::npos);
}

TEST_CASE("learning rate schedule") {
    ProtocolConfig c;
    CHECK(c.learning_rate(0) == doctest::Approx(0.1));
    CHECK(c.learning_rate(24) == doctest::Approx(0.1));
    CHECK(c.learning_rate(25) == doctest::Approx(0.01));
    CHECK(c.learning_rate(50) == doctest::Approx(0.001));
}

TEST_CASE("mode names") {
    for (Mode m : {Mode::Cycle, Mode::Vpdl, Mode::FedAvg, Mode::Standalone}) CHECK(parse_mode(to_string(m)) == m);
    CHECK(parse_mode("cycle") == Mode::Cycle);
    CHECK_THROWS(parse_mode("GOSSIP"));
    CHECK(parse_share_gate(to_string(ShareGate::Receiver)) == ShareGate::Receiver);
}

TEST_CASE("an empty inbox is a pure cross-entropy step") {
    const Small w = small_world(2);
    const ProtocolConfig config = quick(Mode::Cycle);
    auto a = init_participants(w.dataset, w.partition, config, 7);
    auto b = init_participants(w.dataset, w.partition, config, 7);
    const RoundRequest req_a = draw_round_request(a[0], config);
    const RoundRequest req_b = draw_round_request(b[0], config);
    ReputationMatrix reps(2);
    participant_round(a[0], req_a, {}, reps, config, 1);

    ProtocolConfig standalone = config;
    standalone.mode = Mode::Standalone;
    participant_round(b[0], req_b, {}, reps, standalone, 1);
    CHECK(a[0].params == b[0].params);
}

TEST_CASE("an absent message equals a zero-weight message") {
    const Small w = small_world(2);
    ProtocolConfig config = quick(Mode::Cycle);
    auto a = init_participants(w.dataset, w.partition, config, 7);
    auto b = init_participants(w.dataset, w.partition, config, 7);
    auto reqs = std::vector<RoundRequest>{draw_round_request(a[0], config), draw_round_request(a[1], config)};
    draw_round_request(b[0], config);
    draw_round_request(b[1], config);

    // Round 1 is not a scoring round; a zero reputation gives lambda = 0.
    ReputationMatrix zero(2);
    zero.set(0, 1, 0.0);
    const RoundMessage present{1, 0, predict_proba(a[1].params, reqs[0].features)};
    const auto with = participant_round(a[0], reqs[0], {present}, zero, config, 1);
    const RoundMessage absent{1, 0, std::nullopt};
    participant_round(b[0], reqs[0], {absent}, zero, config, 1);
    CHECK(with.weights[1] == 0.0);
    CHECK(a[0].params == b[0].params);
}

TEST_CASE("misaddressed or duplicate messages are rejected") {
    const Small w = small_world(3);
    const ProtocolConfig config = quick(Mode::Cycle);
    auto s = init_participants(w.dataset, w.partition, config, 7);
    const RoundRequest req = draw_round_request(s[0], config);
    ReputationMatrix reps(3);
    CHECK_THROWS(participant_round(s[0], req, {RoundMessage{1, 2, std::nullopt}}, reps, config, 1));
    CHECK_THROWS(participant_round(
        s[0], req, {RoundMessage{1, 0, std::nullopt}, RoundMessage{1, 0, std::nullopt}}, reps, config, 1));
}

TEST_CASE("all-trust CYCLE at N = 2 matches VPDL up to the lambda scale") {
    const Small w = small_world(2);
    ProtocolConfig cycle = quick(Mode::Cycle);
    ProtocolConfig vpdl = quick(Mode::Vpdl);
    auto a = init_participants(w.dataset, w.partition, cycle, 3);
    auto b = init_participants(w.dataset, w.partition, vpdl, 3);
    const RoundRequest ra = draw_round_request(a[0], cycle);
    const RoundRequest rb = draw_round_request(b[0], vpdl);
    const RoundMessage msg{1, 0, predict_proba(a[1].params, ra.features)};
    ReputationMatrix trusted(2);
    trusted.set(0, 1, 1.0);
    participant_round(a[0], ra, {msg}, trusted, cycle, 1);
    participant_round(b[0], rb, {msg}, trusted, vpdl, 1);
    for (std::size_t i = 0; i < a[0].params.size(); ++i) {
        CHECK(a[0].params.values()[i] == doctest::Approx(b[0].params.values()[i]).epsilon(1e-12));
    }
}

TEST_CASE("a collaborator that predicts the truth is fully trusted") {
    const Small w = small_world(2);
    const ProtocolConfig config = quick(Mode::Cycle);
    auto s = init_participants(w.dataset, w.partition, config, 5);
    const RoundRequest req = draw_round_request(s[0], config);
    Matrix truth(req.order.size(), 3, 0.0);
    for (std::size_t i = 0; i < req.order.size(); ++i) truth(i, s[0].train.labels[req.order[i]]) = 1.0;
    ReputationMatrix reps(2);
    participant_round(s[0], req, {RoundMessage{1, 0, truth}}, reps, config, 0);
    REQUIRE(reps.get(0, 1).has_value());
    CHECK(*reps.get(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("standalone mode has zero gains and no reputations") {
    const Small w = small_world(3);
    const auto report = run_protocol(w.dataset, w.partition, quick(Mode::Standalone), 9);
    for (double g : report.gains.gains) CHECK(g == 0.0);
    CHECK(report.trace.reputations.empty());
    CHECK(report.summary.mcg == 0.0);
}

TEST_CASE("VPDL always sends every message") {
    const Small w = small_world(4);
    const auto report = run_protocol(w.dataset, w.partition, quick(Mode::Vpdl), 9);
    for (auto sent : report.trace.messages_sent) CHECK(sent == 12);
}

TEST_CASE("CYCLE reputations stay in [0, 1] and forced rounds send everything") {
    const Small w = small_world(4);
    const ProtocolConfig config = quick(Mode::Cycle);
    const auto report = run_protocol(w.dataset, w.partition, config, 9);
    REQUIRE(report.trace.reputations.size() == static_cast<std::size_t>(config.rounds));
    for (const auto& snap : report.trace.reputations) {
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j < 4; ++j) {
                if (i == j) continue;
                const auto v = snap.get(i, j);
                REQUIRE(v.has_value());
                CHECK(*v >= 0.0);
                CHECK(*v <= 1.0);
            }
        }
    }
    for (int t = 0; t < config.rounds; t += config.share_period) CHECK(report.trace.messages_sent[t] == 12);
}

TEST_CASE("identical participants with a shared schedule score each other identically") {
    Rng rng(4, 1);
    const Dataset ds = make_blobs(3, 6, 80, 0.1, rng);
    Rng split_rng(4, 2);
    DataPartition one = split_homogeneous(ds, 1, 0.2, split_rng);
    DataPartition twin;
    twin.participants = {one.participants[0], one.participants[0]};
    ProtocolConfig config = quick(Mode::Cycle);
    config.shared_batch_schedule = true;
    // Twins share rows by construction, so build the states by hand rather than validate disjointness.
    auto a = init_participants(ds, one, config, 2);
    auto b = init_participants(ds, one, config, 2);
    std::vector<ParticipantState> states;
    states.push_back(std::move(a[0]));
    states.push_back(std::move(b[0]));
    states[1].id = 1;
    ReputationMatrix reps(2);
    for (int round = 0; round < 6; ++round) {
        std::vector<RoundRequest> reqs{draw_round_request(states[0], config), draw_round_request(states[1], config)};
        std::vector<std::vector<RoundMessage>> inbox(2);
        for (auto& s : states) {
            for (auto& m : build_outbox(s, reqs, reps, config, round)) inbox[m.receiver].push_back(std::move(m));
        }
        for (std::size_t i = 0; i < 2; ++i) participant_round(states[i], reqs[i], inbox[i], reps, config, round);
        CHECK(reps.get(0, 1) == reps.get(1, 0));
    }
    CHECK(states[0].params == states[1].params);
}

TEST_CASE("lambda0 = 0 makes every PDL mode identical") {
    const Small w = small_world(3);
    ProtocolConfig config = quick(Mode::Cycle);
    config.lambda0 = 0.0;
    const RunTrace cycle = simulate_pdl(w.dataset, w.partition, config, 4, true);
    config.mode = Mode::Vpdl;
    const RunTrace vpdl = simulate_pdl(w.dataset, w.partition, config, 4, true);
    config.mode = Mode::Standalone;
    const RunTrace alone = simulate_pdl(w.dataset, w.partition, config, 4, true);
    CHECK(cycle.param_history == alone.param_history);
    CHECK(vpdl.param_history == alone.param_history);
}

TEST_CASE("aggregate is a size-weighted mean") {
    const ModelParams p1(2, 1, Vector{1, 2, 3, 4});
    const ModelParams p2(2, 1, Vector{5, 6, 7, 8});
    const std::vector<double> w{3.0, 1.0};
    const ModelParams avg = aggregate({p1, p2}, w);
    CHECK(avg.values() == Vector{2.0, 3.0, 4.0, 5.0});
    CHECK(aggregate({p1, p1}, w) == p1);
    CHECK_THROWS(aggregate({p1}, w));
}

TEST_CASE("FedAvg with one participant is local training") {
    const Small w = small_world(1);
    const ProtocolConfig config = quick(Mode::FedAvg);
    const RunTrace fed = simulate_fedavg(w.dataset, w.partition, config, 8, true);
    ProtocolConfig alone = config;
    alone.mode = Mode::Standalone;
    const RunTrace local = simulate_pdl(w.dataset, w.partition, alone, 8, true);
    CHECK(fed.final_params == local.final_params);
    CHECK(fed.accuracy == local.accuracy);
}

TEST_CASE("FedAvg participants share one model") {
    const Small w = small_world(3);
    const auto report = run_fedavg(w.dataset, w.partition, quick(Mode::FedAvg), 8);
    CHECK(report.trace.final_params[0] == report.trace.final_params[1]);
    CHECK(report.trace.final_params[1] == report.trace.final_params[2]);
}

TEST_CASE("runs are deterministic") {
    const Small w = small_world(3);
    const auto a = run_protocol(w.dataset, w.partition, quick(Mode::Cycle), 21);
    const auto b = run_protocol(w.dataset, w.partition, quick(Mode::Cycle), 21);
    CHECK(a.trace.final_params == b.trace.final_params);
    CHECK(a.trace.reputations == b.trace.reputations);
    CHECK(a.trace.messages_sent == b.trace.messages_sent);
}

TEST_CASE("reputation csv round trip") {
    ReputationMatrix m(3);
    m.set(0, 1, 0.125);
    m.set(2, 0, 0.5);
    const auto path = std::filesystem::temp_directory_path() / "cycle_rep.csv";
    write_reputation_csv(m, path);
    const auto grid = read_reputation_csv(path);
    REQUIRE(grid.size() == 3);
    CHECK(grid[0][0] == 1.0);
    CHECK(grid[0][1] == 0.125);
    CHECK(grid[2][0] == 0.5);
    CHECK(std::isnan(grid[1][0]));
}
