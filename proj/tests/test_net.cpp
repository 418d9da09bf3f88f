#include "ingestbench/graphite_net.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <thread>

using namespace ingestbench;

namespace {

bool wait_for(const std::function<bool()>& cond)
{
    for (int i = 0; i < 500; ++i) {
        if (cond()) {
            return true;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return false;
}

} // namespace

TEST(CarbonServer, ReceivesPointsOverTcp)
{
    SeriesStore store;
    CarbonServer server(store, 0);
    ASSERT_NE(server.port(), 0);
    {
        CarbonClient client("127.0.0.1", server.port());
        client.send({"kafka.server.BrokerTopicMetrics.MessagesInPerSec.OneMinuteRate", 420'000, 1'565'000'000});
        client.send({"collectd.broker1.load.load.shortterm", 14.75, 1'565'000'005});
    }
    ASSERT_TRUE(wait_for([&] { return server.accepted() == 2; }));
    const auto pts = store.points("collectd.broker1.load.load.shortterm");
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_EQ(pts[0].value, 14.75);
    EXPECT_EQ(pts[0].ts, 1'565'000'005);
}

TEST(CarbonServer, MalformedLinesAreCountedNotFatal)
{
    SeriesStore store;
    CarbonServer server(store, 0);
    {
        CarbonClient client("127.0.0.1", server.port());
        client.send_raw("good.one 1 10\nbroken\nx y z\n");
        client.send_raw("good.two 2 ");
        client.send_raw("15\ntrailing");
    }
    ASSERT_TRUE(wait_for([&] { return server.accepted() + server.malformed() == 5; }));
    EXPECT_EQ(server.accepted(), 2u);
    EXPECT_EQ(server.malformed(), 3u);

    CarbonClient again("127.0.0.1", server.port());
    again.send({"still.alive", 3, 20});
    again.close();
    ASSERT_TRUE(wait_for([&] { return store.contains("still.alive"); }));
}

TEST(CarbonServer, ConcurrentConnections)
{
    SeriesStore store;
    CarbonServer server(store, 0);
    std::vector<std::thread> clients;
    for (int c = 0; c < 4; ++c) {
        clients.emplace_back([&, c] {
            CarbonClient client("127.0.0.1", server.port());
            for (int i = 0; i < 250; ++i) {
                client.send({"conn" + std::to_string(c), static_cast<double>(i), i * 5});
            }
        });
    }
    for (auto& t : clients) {
        t.join();
    }
    ASSERT_TRUE(wait_for([&] { return server.accepted() == 1000; }));
    for (int c = 0; c < 4; ++c) {
        EXPECT_EQ(store.points("conn" + std::to_string(c)).size(), 250u);
    }
    server.stop();
}

TEST(CarbonClient, ConnectFailureIsReported)
{
    SeriesStore store;
    std::uint16_t port = 0;
    {
        CarbonServer probe(store, 0);
        port = probe.port();
    }
    EXPECT_THROW(CarbonClient("127.0.0.1", port), Error);
}
