#include "ingestbench/cluster.hpp"
#include "ingestbench/log.hpp"
#include "ingestbench/producer.hpp"
#include "ingestbench/sender.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace ingestbench;

namespace {

Record rec(std::string payload, Nanos ts = 0) { return Record(std::nullopt, std::move(payload), ts); }

PartitionLog five_entry_log()
{
    PartitionLog log("t", 0, TimestampType::CreateTime);
    for (int i = 0; i < 5; ++i) {
        log.append(rec("r" + std::to_string(i), i), 100 + i);
    }
    return log;
}

} // namespace

TEST(CreateTopic, LeaderIsBrokerOne)
{
    Simulation sim;
    Cluster c(sim, paper_hw_profile(), 3);
    const auto t = c.create_topic({"ingest", 1, 1, TimestampType::CreateTime});
    const auto& rs = c.replicas(t, 0);
    EXPECT_EQ(rs.leader, 1);
    EXPECT_TRUE(rs.followers.empty());
    EXPECT_EQ(rs.in_sync, std::vector<int>{1});
    EXPECT_EQ(c.host_name(c.leader_host(t, 0)), "broker1");
}

TEST(CreateTopic, TwoPartitionsAreIndependentLogs)
{
    Simulation sim;
    Cluster c(sim, paper_hw_profile(), 3);
    const auto t = c.create_topic({"ingest", 2, 1, TimestampType::CreateTime});
    c.log(t, 0).append(rec("x"), 0);
    EXPECT_EQ(c.log(t, 0).next_offset(), 1);
    EXPECT_EQ(c.log(t, 1).next_offset(), 0);
    EXPECT_NE(&c.log(t, 0), &c.log(t, 1));
}

TEST(CreateTopic, Errors)
{
    Simulation sim;
    Cluster c(sim, paper_hw_profile(), 3);
    c.create_topic({"a", 1, 1, TimestampType::CreateTime});
    try {
        c.create_topic({"a", 1, 1, TimestampType::CreateTime});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TopicExists);
    }
    try {
        c.create_topic({"b", 1, 4, TimestampType::CreateTime});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidReplication);
    }
}

TEST(CreateTopic, ReplicaSetsHaveRfMinusOneFollowers)
{
    Simulation sim;
    Cluster c(sim, paper_hw_profile(), 3);
    const auto t = c.create_topic({"r", 3, 3, TimestampType::CreateTime});
    for (int p = 0; p < 3; ++p) {
        const auto& rs = c.replicas(t, p);
        EXPECT_EQ(rs.followers.size(), 2u);
        EXPECT_EQ(rs.in_sync.front(), rs.leader);
        EXPECT_EQ(rs.leader, p + 1);
    }
}

TEST(Append, OffsetsAndTimestamps)
{
    PartitionLog create("t", 0, TimestampType::CreateTime);
    PartitionLog log_append("t", 0, TimestampType::LogAppendTime);
    const auto a = create.append(rec("x", 100), 250);
    const auto b = log_append.append(rec("x", 100), 250);
    EXPECT_EQ(a.offset, 0);
    EXPECT_EQ(a.stored_ts, 100);
    EXPECT_EQ(b.stored_ts, 250);
    EXPECT_EQ(create.append(rec("y"), 300).offset, 1);
}

TEST(Fetch, StrictlyGreaterOffsets)
{
    const auto log = five_entry_log();
    const auto after1 = log.fetch(1);
    ASSERT_EQ(after1.size(), 3u);
    EXPECT_EQ(after1[0].offset, 2);
    EXPECT_EQ(after1[0].record.payload(), "r2");
    EXPECT_EQ(after1[2].offset, 4);
    EXPECT_TRUE(log.fetch(4).empty());
    EXPECT_EQ(log.fetch(-1).size(), 5u);
    try {
        (void)log.fetch(-2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidOffset);
    }
}

TEST(Fetch, SpanSegmentsMaterializeFromSource)
{
    auto src = RecordSource::in_memory({"a", "bb", "ccc"});
    PartitionLog log("t", 0, TimestampType::LogAppendTime);
    std::vector<TsRun> runs;
    for (Nanos ts : {10, 20, 30, 45}) {
        push_ts(runs, ts);
    }
    log.append_span(SourceSpan{src, 1, 1, 4}, runs, 2 + 3 + 1 + 2, 500);
    log.append(rec("z", 7), 600);
    const auto all = log.fetch(-1);
    ASSERT_EQ(all.size(), 5u);
    EXPECT_EQ(all[0].record.payload(), "bb");
    EXPECT_EQ(all[1].record.payload(), "ccc");
    EXPECT_EQ(all[2].record.payload(), "a");
    EXPECT_EQ(all[3].record.create_ts(), 45);
    EXPECT_EQ(all[3].stored_ts, 500);
    EXPECT_EQ(all[4].stored_ts, 600);
    EXPECT_TRUE(log.offsets_dense());
    EXPECT_EQ(log.fetch(2, 1).front().offset, 3);
}

TEST(Fetch, PartitionsTheLogForEveryK)
{
    std::mt19937_64 rng(1);
    PartitionLog log("t", 0, TimestampType::CreateTime);
    auto src = RecordSource::in_memory({"p", "q"});
    for (int i = 0; i < 50; ++i) {
        if (rng() % 2) {
            log.append(rec("e" + std::to_string(i)), i);
        } else {
            const auto n = static_cast<std::uint32_t>(1 + rng() % 5);
            std::vector<TsRun> runs;
            for (std::uint32_t j = 0; j < n; ++j) {
                push_ts(runs, i * 10 + static_cast<Nanos>(j * j));
            }
            log.append_span(SourceSpan{src, static_cast<std::uint64_t>(i), 1, n}, runs, n, i);
        }
    }
    ASSERT_TRUE(log.offsets_dense());
    const auto all = log.fetch(-1);
    ASSERT_EQ(static_cast<std::int64_t>(all.size()), log.next_offset());
    for (std::int64_t k = -1; k < log.next_offset(); ++k) {
        const auto suffix = log.fetch(k);
        ASSERT_EQ(static_cast<std::int64_t>(suffix.size()), log.next_offset() - 1 - k);
        for (std::size_t i = 0; i < suffix.size(); ++i) {
            EXPECT_EQ(suffix[i].offset, k + 1 + static_cast<std::int64_t>(i));
            EXPECT_EQ(suffix[i].record, all[static_cast<std::size_t>(k + 1) + i].record);
        }
    }
}

TEST(AckTime, Levels)
{
    RequestTimeline tl{100, 400, {}};
    EXPECT_EQ(ack_time(tl, Acks::Acks0), 100);
    EXPECT_EQ(ack_time(tl, Acks::Acks1), 400);
    EXPECT_EQ(ack_time(tl, Acks::AcksAll), 400);
    tl.follower_done = {700, 650};
    EXPECT_EQ(ack_time(tl, Acks::AcksAll, 3, 2), 700);
    try {
        ack_time(tl, Acks::AcksAll, 1, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotEnoughReplicas);
    }
}

TEST(Deliver, PacketCounts)
{
    Simulation sim;
    Cluster c(sim, paper_hw_profile(), 3);
    const auto client = c.host("client1");
    const auto b1 = c.broker_host(1);
    int arrivals = 0;
    c.deliver(1500, client, b1, [&] { ++arrivals; });
    sim.run();
    EXPECT_EQ(c.eth0(b1).packets_rx, 1u);
    c.deliver(1501, client, b1, [&] { ++arrivals; });
    sim.run();
    EXPECT_EQ(c.eth0(b1).packets_rx, 3u);
    EXPECT_EQ(c.eth0(b1).bytes_rx, 3001u);
    EXPECT_EQ(c.loopback(b1).bytes_rx, 0u);
    EXPECT_EQ(arrivals, 2);
}

TEST(Deliver, LocalUsesLoopbackAtLoopbackSpeed)
{
    Simulation sim;
    Cluster c(sim, paper_hw_profile(), 3);
    const auto b1 = c.broker_host(1);
    Nanos arrived = 0;
    c.deliver(908'000, b1, b1, [&] { arrived = sim.now(); });
    sim.run();
    EXPECT_EQ(arrived, 1'000'000);
    EXPECT_EQ(c.loopback(b1).packets_rx, 606u);
    EXPECT_EQ(c.eth0(b1).bytes_rx, 0u);
}

TEST(Deliver, RemoteSendersShareTheBrokerLink)
{
    Simulation sim;
    Cluster c(sim, paper_hw_profile(), 3);
    const auto b1 = c.broker_host(1);
    std::vector<Nanos> done;
    const std::uint64_t bytes = 1'175'000; // 10 ms at nic_bw
    c.deliver(bytes, c.host("a"), b1, [&] { done.push_back(sim.now()); });
    c.deliver(bytes, c.host("b"), b1, [&] { done.push_back(sim.now()); });
    sim.run();
    ASSERT_EQ(done.size(), 2u);
    EXPECT_EQ(done[0], 20'000'000);
    EXPECT_EQ(done[1], 30'000'000);
}

TEST(Tick, LoadFollowsDemandAndIdleEth0StaysAtBackground)
{
    Simulation sim;
    Cluster c(sim, paper_hw_profile(), 3);
    SeriesStore store;
    c.start_metrics(&store, 0, [](Nanos t) { return t < 300 * kNanosPerSecond; });
    const auto b1 = c.broker_host(1);
    c.sender_started(b1);
    sim.run();
    EXPECT_NEAR(c.load(b1), 1.0 - std::exp(-300.0 / 60.0) * 1.0, 0.02);
    const auto eth0 = store.points(metric_path::packets_rx("broker1", "eth0"));
    for (const auto& p : eth0) {
        EXPECT_LT(p.value, 100.0);
    }
    EXPECT_NEAR(eth0.back().value, 40.0, 1.0);
    EXPECT_EQ(store.points(metric_path::load("broker2")).back().value, 0.0);
}

TEST(Tick, FirstSampleAtZeroAndFiveSecondGrid)
{
    Simulation sim;
    Cluster c(sim, paper_hw_profile(), 3);
    SeriesStore store;
    c.start_metrics(&store, 1000, [](Nanos t) { return t < 20 * kNanosPerSecond; });
    sim.run();
    const auto pts = store.points(metric_path::kMessagesInRate);
    ASSERT_EQ(pts.size(), 5u);
    EXPECT_EQ(pts.front().ts, 1000);
    EXPECT_EQ(pts.back().ts, 1020);
}

namespace {

struct Rig {
    Simulation sim;
    Cluster cluster{sim, paper_hw_profile(), 3};
    TopicHandle topic;

    explicit Rig(int rf = 1, TimestampType tt = TimestampType::CreateTime)
    {
        topic = cluster.create_topic({"ingest", 1, rf, tt});
    }
};

} // namespace

TEST(Replication, AcksAllWaitsForFollowers)
{
    Rig rig(3);
    ProducerProps props;
    props.acks = Acks::AcksAll;
    props.batch_size_bytes = 100;
    Producer prod(rig.sim, rig.cluster, rig.topic, props, rig.cluster.host("client"));
    auto receipt = prod.send(rec(std::string(100, 'x')));
    prod.flush();
    ASSERT_TRUE(receipt.resolved());
    const auto& tl = receipt.timeline();
    ASSERT_EQ(tl.follower_done.size(), 2u);
    EXPECT_GT(receipt.ack_time(), *tl.leader_done);
    EXPECT_GE(tl.follower_done[0], *tl.leader_done + paper_hw_profile().replication_delay_ns);
    for (int b = 1; b <= 3; ++b) {
        EXPECT_EQ(rig.cluster.replica_log(rig.topic, 0, b).next_offset(), 1);
    }
}

TEST(Conservation, BytesInEqualsAppendedBytes)
{
    Rig rig;
    SenderSpec spec;
    spec.delay_ns = 10'000;
    spec.duration_s = 3;
    const auto stats = run_sender(rig.sim, rig.cluster, rig.topic, spec);
    EXPECT_EQ(stats.sent, 300'000u);
    EXPECT_EQ(rig.cluster.messages_in(), stats.sent);
    EXPECT_EQ(rig.cluster.bytes_in(), rig.cluster.log(rig.topic, 0).bytes());
    EXPECT_TRUE(rig.cluster.log(rig.topic, 0).offsets_dense());
}

TEST(Throughput, AppendRateNeverExceedsDiskBandwidth)
{
    Rig rig;
    SeriesStore store;
    SenderSpec spec;
    spec.delay_ns = 1'000;
    spec.duration_s = 120;
    Sender sender(rig.sim, rig.cluster, rig.topic, spec, 0);
    sender.start(0);
    rig.cluster.start_metrics(&store, 0, [&](Nanos t) { return t < 120 * kNanosPerSecond || !sender.finished(); });
    rig.sim.run();
    const double ceiling = paper_hw_profile().effective_disk_bw;
    for (const auto& p : store.points(metric_path::kBytesInRate)) {
        EXPECT_LE(p.value, ceiling * 1.0001);
    }
    const double appended = static_cast<double>(rig.cluster.bytes_in());
    EXPECT_LE(appended / (static_cast<double>(rig.sim.now()) / 1e9), ceiling);
}

TEST(Determinism, EqualSeedsGiveEqualCountersAndSeries)
{
    auto run = [](std::uint64_t seed) {
        Simulation sim;
        Cluster c(sim, paper_hw_profile(), 3, seed);
        const auto t = c.create_topic({});
        SeriesStore store;
        SenderSpec spec;
        spec.delay_ns = 2'000;
        spec.duration_s = 60;
        spec.producer.acks = Acks::Acks1;
        Sender s(sim, c, t, spec, 0);
        s.start(0);
        c.start_metrics(&store, 0, [&](Nanos n) { return n < 60 * kNanosPerSecond || !s.finished(); });
        sim.run();
        std::string all;
        for (const auto& p : store.paths()) {
            all += export_tsv(store, p, 0, 1000);
        }
        return std::make_pair(all, c.messages_in());
    };
    EXPECT_EQ(run(4), run(4));
}
