#include <gtest/gtest.h>

#include <deque>
#include <random>

#include "pwrap/flow_control.hpp"
#include "pwrap/packet_fifo.hpp"
#include "support.hpp"

using namespace pwrap;

namespace {

FifoConfig small(unsigned wr = 64, unsigned rd = 64, bool fwft = true, unsigned lat = 2) {
    FifoConfig c;
    c.write_width_bits = wr;
    c.read_width_bits = rd;
    c.depth_write_words = 16;
    c.fwft = fwft;
    c.prog_full_threshold = 16;
    c.prog_empty_threshold = 0;
    c.count_sync_latency = lat;
    return c;
}

Beat word(std::uint32_t lo, std::uint32_t hi, bool sof, bool eof) {
    Beat b;
    b.dw = {lo, hi, 0, 0};
    b.sof = sof;
    b.eof = eof;
    return b;
}

void settle(PacketFifo& f, int n = 8) {
    for (int i = 0; i < n; ++i) {
        f.tick_write_domain();
        f.tick_read_domain();
    }
}

}  // namespace

TEST(PacketFifo, EmptyCountsAndFlags) {
    PacketFifo f(small());
    EXPECT_EQ(f.counts(), (FifoCounts{0, 0}));
    const auto fl = f.flags();
    EXPECT_TRUE(fl.empty);
    EXPECT_TRUE(fl.prog_empty);
    EXPECT_FALSE(fl.full);
    EXPECT_FALSE(f.read().valid);
}

TEST(PacketFifo, ConfigValidation) {
    auto c = small();
    c.depth_write_words = 24;
    EXPECT_THROW(PacketFifo{c}, ConfigError);
    c = small();
    c.write_width_bits = 48;
    EXPECT_THROW(PacketFifo{c}, ConfigError);
    c = small();
    c.prog_full_threshold = 17;
    EXPECT_THROW(PacketFifo{c}, ConfigError);
    c = small();
    c.prog_empty_threshold = 16;
    EXPECT_THROW(PacketFifo{c}, ConfigError);
}

TEST(PacketFifo, WriteToFullIsRejectedWithoutSideEffects) {
    PacketFifo f(small());
    for (std::uint32_t i = 0; i < 16; ++i) ASSERT_TRUE(f.write(word(i, i, false, false)).accepted);
    EXPECT_TRUE(f.flags().full);
    EXPECT_FALSE(f.write(word(99, 99, false, false)).accepted);
    EXPECT_EQ(f.occupancy(), 16u);
    EXPECT_EQ(f.inspect_slot(15).dw[0], 15u);
}

TEST(PacketFifo, ReadFreesSpaceAfterSync) {
    PacketFifo f(small());
    for (std::uint32_t i = 0; i < 16; ++i) f.write(word(i, 0, false, false));
    settle(f);
    const auto r = f.read();
    ASSERT_TRUE(r.valid);
    EXPECT_EQ(r.word->dw[0], 0u);
    // The writer still sees the old pointer until the synchronizer catches up.
    EXPECT_FALSE(f.write(word(16, 0, false, false)).accepted);
    settle(f);
    EXPECT_TRUE(f.write(word(16, 0, false, false)).accepted);
    EXPECT_EQ(f.occupancy(), 16u);
}

TEST(PacketFifo, FwftExposesHeadAfterLatency) {
    PacketFifo f(small(64, 64, true, 2));
    f.write(word(1, 2, true, true));
    f.tick_write_domain();
    EXPECT_FALSE(f.peek());
    for (int i = 0; i < 3; ++i) f.tick_read_domain();
    ASSERT_TRUE(f.peek());
    const auto r = f.read();
    ASSERT_TRUE(r.valid);
    EXPECT_EQ(*r.word, word(1, 2, true, true));
    EXPECT_FALSE(f.read().valid);
}

TEST(PacketFifo, StandardModeHasOneEdgeReadLatency) {
    PacketFifo f(small(64, 64, false, 0));
    f.write(word(7, 8, true, true));
    f.tick_read_domain();
    EXPECT_FALSE(f.peek());  // no fall-through
    auto r = f.read();
    EXPECT_FALSE(r.valid);  // strobe latches, data appears next edge
    EXPECT_TRUE(f.output_latched());
    r = f.read(false);
    ASSERT_TRUE(r.valid);
    EXPECT_EQ(r.word->dw[0], 7u);
}

TEST(PacketFifo, WidthConversionSplits64To32) {
    PacketFifo f(small(64, 32));
    f.write(word(0xA, 0xB, true, true));
    settle(f);
    auto a = f.read();
    auto b = f.read();
    ASSERT_TRUE(a.valid && b.valid);
    EXPECT_EQ(a.word->dw[0], 0xAu);
    EXPECT_TRUE(a.word->sof);
    EXPECT_FALSE(a.word->eof);
    EXPECT_EQ(b.word->dw[0], 0xBu);
    EXPECT_FALSE(b.word->sof);
    EXPECT_TRUE(b.word->eof);
    EXPECT_FALSE(f.read().valid);
}

TEST(PacketFifo, WidthConversionMerges32To64AndHonoursMarkers) {
    PacketFifo f(small(32, 64));
    auto one = [](std::uint32_t v, bool sof, bool eof) {
        Beat b;
        b.lanes = 1;
        b.valid_dw = 1;
        b.dw[0] = v;
        b.sof = sof;
        b.eof = eof;
        return b;
    };
    // Three-DW packet then a one-DW packet: the odd tail must not merge across the boundary.
    f.write(one(1, true, false));
    f.write(one(2, false, false));
    f.write(one(3, false, true));
    f.write(one(4, true, true));
    settle(f);
    EXPECT_EQ(f.counts().rd_data_count, 3u);
    auto w1 = f.read(), w2 = f.read(), w3 = f.read();
    ASSERT_TRUE(w1.valid && w2.valid && w3.valid);
    EXPECT_EQ(w1.word->valid_dw, 2);
    EXPECT_TRUE(w1.word->sof);
    EXPECT_EQ(w2.word->dw[0], 3u);
    EXPECT_EQ(w2.word->valid_dw, 1);
    EXPECT_TRUE(w2.word->eof);
    EXPECT_EQ(w3.word->dw[0], 4u);
    EXPECT_TRUE(w3.word->sof && w3.word->eof);
}

// Reference model: split every written beat into (dw, sof, eof) lanes and
// regroup them by the read width, closing at eof and before sof.
TEST(PacketFifo, WidthConversionMatchesByteStreamSplitter) {
    std::mt19937_64 rng(5);
    for (unsigned wr : {32u, 64u, 128u}) {
        for (unsigned rd : {32u, 64u, 128u}) {
            auto c = small(wr, rd);
            c.depth_write_words = 1024;
            c.prog_full_threshold = 1024;
            PacketFifo f(c);
            std::vector<std::uint32_t> expect_dw;
            std::vector<int> expect_sof, expect_eof;
            for (int p = 0; p < 40; ++p) {
                std::vector<std::uint32_t> dws(1 + rng() % 9);
                for (auto& d : dws) d = static_cast<std::uint32_t>(rng());
                expect_sof.push_back(static_cast<int>(expect_dw.size()));
                expect_dw.insert(expect_dw.end(), dws.begin(), dws.end());
                expect_eof.push_back(static_cast<int>(expect_dw.size()) - 1);
                for (const auto& b : frame_beats(dws, wr / 32)) ASSERT_TRUE(f.write(b).accepted);
            }
            settle(f);
            std::vector<std::uint32_t> got;
            std::vector<int> got_sof, got_eof;
            while (true) {
                const auto r = f.read();
                if (!r.valid) break;
                ASSERT_LE(r.word->valid_dw, rd / 32);
                if (r.word->sof) got_sof.push_back(static_cast<int>(got.size()));
                for (int k = 0; k < r.word->valid_dw; ++k) got.push_back(r.word->dw[static_cast<std::size_t>(k)]);
                if (r.word->eof) got_eof.push_back(static_cast<int>(got.size()) - 1);
            }
            EXPECT_EQ(got, expect_dw) << wr << "->" << rd;
            EXPECT_EQ(got_sof, expect_sof);
            EXPECT_EQ(got_eof, expect_eof);
            EXPECT_EQ(f.occupancy(), 0u);
        }
    }
}

TEST(PacketFifo, CountLagIsConservativeAndConverges) {
    // Small random traces: writes and reads interleaved with ticks of either
    // side; the lagged views must bracket the truth and settle to it.
    std::mt19937_64 rng(17);
    for (unsigned lat : {0u, 1u, 2u, 3u}) {
        for (int trial = 0; trial < 200; ++trial) {
            PacketFifo f(small(64, 64, true, lat));
            std::uint32_t next = 0;
            for (int step = 0; step < 60; ++step) {
                switch (rng() % 4) {
                    case 0: f.write(word(next, next, true, true)), ++next; break;
                    case 1: f.read(); break;
                    case 2: f.tick_write_domain(); break;
                    default: f.tick_read_domain(); break;
                }
                const auto c = f.counts();
                ASSERT_GE(c.wr_data_count, f.occupancy());
                ASSERT_LE(c.rd_data_count, f.ready_read_words());
                ASSERT_LE(f.occupancy(), 16u);
            }
            for (unsigned i = 0; i <= lat; ++i) {
                f.tick_write_domain();
                f.tick_read_domain();
            }
            ASSERT_EQ(f.counts().wr_data_count, f.occupancy());
            ASSERT_EQ(f.counts().rd_data_count, f.ready_read_words());
        }
    }
}

TEST(PacketFifo, ImmediatelyAfterFiveWritesReadCountNeverExceedsFive) {
    for (int ticks = 0; ticks < 6; ++ticks) {
        PacketFifo f(small(64, 64, true, 2));
        for (std::uint32_t i = 0; i < 5; ++i) f.write(word(i, i, true, true));
        for (int t = 0; t < ticks; ++t) f.tick_read_domain();
        EXPECT_LE(f.counts().rd_data_count, 5u);
        if (ticks >= 3) {
            EXPECT_EQ(f.counts().rd_data_count, 5u);
        }
    }
}

TEST(PacketFifo, ReferenceQueueUnderRandomOperations) {
    std::mt19937_64 rng(23);
    PacketFifo f(small(64, 64, true, 1));
    std::deque<std::uint32_t> ref;
    std::uint32_t next = 0;
    for (int step = 0; step < 20000; ++step) {
        const auto op = rng() % 3;
        if (op == 0) {
            const bool room = f.counts().wr_data_count < 16;
            const bool acc = f.write(word(next, ~next, true, true)).accepted;
            ASSERT_EQ(acc, room);
            if (acc) ref.push_back(next++);
        } else if (op == 1) {
            const auto r = f.read();
            if (r.valid) {
                ASSERT_FALSE(ref.empty());
                ASSERT_EQ(r.word->dw[0], ref.front());
                ref.pop_front();
            }
        } else {
            f.tick_write_domain();
            f.tick_read_domain();
        }
        ASSERT_EQ(f.occupancy(), ref.size());
    }
}

TEST(PacketFifo, FwftAndStandardDeliverSameSequence) {
    std::vector<std::vector<std::uint32_t>> out(2);
    for (int mode = 0; mode < 2; ++mode) {
        PacketFifo f(small(64, 64, mode == 0, 2));
        std::mt19937_64 r2(99);
        std::uint32_t next = 0;
        for (int step = 0; step < 5000; ++step) {
            if (r2() % 2) {
                if (f.write(word(next, next, true, true)).accepted) ++next;
            }
            const bool strobe = r2() % 3 != 0;
            const auto r = f.read(strobe);
            if (r.valid) out[static_cast<std::size_t>(mode)].push_back(r.word->dw[0]);
            f.tick_write_domain();
            f.tick_read_domain();
        }
        for (int i = 0; i < 10; ++i) {
            settle(f, 1);
            const auto r = f.read();
            if (r.valid) out[static_cast<std::size_t>(mode)].push_back(r.word->dw[0]);
        }
        if (const auto r = f.read(false); r.valid) out[static_cast<std::size_t>(mode)].push_back(r.word->dw[0]);
    }
    EXPECT_EQ(out[0], out[1]);
    for (std::size_t i = 0; i < out[0].size(); ++i) ASSERT_EQ(out[0][i], i);
}

TEST(PacketFifo, InjectFault) {
    PacketFifo f(small());
    f.write(word(0x11, 0x22, true, false));
    f.write(word(0x33, 0x44, false, true));
    EXPECT_THROW(f.inject_fault(2, 1), IndexOutOfRange);

    f.inject_fault(1, 0);
    EXPECT_EQ(f.inspect_slot(1), word(0x33, 0x44, false, true));

    f.inject_fault(1, 0x0000'0001'0000'0100ull);
    EXPECT_EQ(f.inspect_slot(1), word(0x133, 0x45, false, true));

    // Marker corruption: drop the eof of the first packet.
    f.inject_fault(1, 0, 0x2);
    EXPECT_FALSE(f.inspect_slot(1).eof);
    settle(f);
    EXPECT_FALSE(f.packet_visible());
}

TEST(FlowControl, ThresholdProducerPrecondition) {
    auto c = small();
    c.prog_full_threshold = 12;
    PacketFifo f(c);
    EXPECT_NO_THROW(PacketProducer(f, ProducerStrategy::Threshold, 4));
    EXPECT_THROW(PacketProducer(f, ProducerStrategy::Threshold, 5), ConfigError);
    EXPECT_THROW(PacketProducer(f, ProducerStrategy::Ack, 17), ConfigError);
}

TEST(FlowControl, CountGateNeedsFwft) {
    PacketFifo f(small(64, 64, false));
    EXPECT_THROW(PacketConsumer(f, ConsumerStrategy::CountGate, 4, [](AssembledPacket&&) {}), ConfigError);
    EXPECT_NO_THROW(PacketConsumer(f, ConsumerStrategy::Valid, 4, [](AssembledPacket&&) {}));
}

TEST(FlowControl, AckRetriesSameWordUntilAccepted) {
    PacketFifo f(small());
    for (int i = 0; i < 16; ++i) f.write(word(0, 0, true, true));
    PacketProducer p(f, ProducerStrategy::Ack, 2);
    const std::vector<std::uint32_t> pkt{0xAAAA, 0xBBBB, 0xCCCC};
    p.enqueue(pkt);
    for (int cycle = 1; cycle <= 3; ++cycle) {
        EXPECT_EQ(p.step(), PacketProducer::Action::Rejected);
        f.tick_write_domain();
    }
    // Drain one slot and let the writer see it.
    settle(f);
    ASSERT_TRUE(f.read().valid);
    settle(f);
    EXPECT_EQ(p.step(), PacketProducer::Action::Wrote);
    EXPECT_EQ(p.rejected_writes(), 3u);
    EXPECT_EQ(f.inspect_slot(15), word(0xAAAA, 0xBBBB, true, false));
}

TEST(FlowControl, SpaceCountStallsWhenOneWordShort) {
    PacketFifo f(small());
    for (int i = 0; i < 14; ++i) f.write(word(0, 0, true, true));
    PacketProducer p(f, ProducerStrategy::SpaceCount, 3);
    const std::vector<std::uint32_t> pkt(6, 1);  // 3 words, only 2 free
    p.enqueue(pkt);
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(p.step(), PacketProducer::Action::Waiting);
        f.tick_write_domain();
    }
    EXPECT_EQ(f.occupancy(), 14u);
}

TEST(FlowControl, CountGateWaitsForWholePacket) {
    PacketFifo f(small());
    std::vector<std::vector<std::uint32_t>> got;
    PacketConsumer c(f, ConsumerStrategy::CountGate, 4,
                     [&](AssembledPacket&& p) { got.push_back(std::move(p.dws)); });
    const std::vector<std::uint32_t> pkt{0x40000004, 0x0100000F, 0xFD000000, 1, 2, 3, 4};
    const auto beats = frame_beats(pkt, 2);
    f.write(beats[0]);
    f.write(beats[1]);
    settle(f);
    for (int i = 0; i < 5; ++i) EXPECT_EQ(c.step(), 0u);
    f.write(beats[2]);
    f.write(beats[3]);
    settle(f);
    std::size_t taken = 0;
    for (int i = 0; i < 5; ++i) taken += c.step();
    EXPECT_EQ(taken, 4u);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0], pkt);
}

TEST(FlowControl, ValidReaderOnEmptyFifoIsHarmless) {
    PacketFifo f(small());
    PacketConsumer c(f, ConsumerStrategy::Valid, 4, [](AssembledPacket&&) { FAIL(); });
    for (int i = 0; i < 10; ++i) EXPECT_EQ(c.step(), 0u);
    EXPECT_TRUE(c.diagnostics().clean());
}

namespace {

std::vector<std::vector<std::uint32_t>> random_packets(std::uint64_t seed, std::size_t n) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::uint32_t>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pwrap::testing::random_packet(rng, 12, rng() % 2 == 0));
    return out;
}

}  // namespace

TEST(FlowControl, EveryStrategyPairIsLossless) {
    const auto pkts = random_packets(2024, 2000);
    for (auto ps : {ProducerStrategy::Ack, ProducerStrategy::SpaceCount, ProducerStrategy::Threshold}) {
        for (auto cs : {ConsumerStrategy::Valid, ConsumerStrategy::CountGate, ConsumerStrategy::Threshold}) {
            for (double p : {0.1, 0.5, 0.9}) {
                FlowExperiment x;
                x.fifo.depth_write_words = 32;
                x.fifo.prog_full_threshold = 32 - 9;
                x.fifo.prog_empty_threshold = 8;
                x.producer = ps;
                x.consumer = cs;
                x.write_idle_probability = p;
                x.read_idle_probability = p;
                x.seed = 7;
                const auto r = run_flow_experiment(x, pkts);
                ASSERT_TRUE(r.drained) << to_string(ps) << "/" << to_string(cs) << " p=" << p;
                ASSERT_EQ(r.received, pkts) << to_string(ps) << "/" << to_string(cs) << " p=" << p;
                ASSERT_TRUE(r.diagnostics.clean());
                ASSERT_LE(r.max_occupancy, 32u);
                if (ps != ProducerStrategy::Ack) {
                    ASSERT_EQ(r.rejected_writes, 0u);
                }
            }
        }
    }
}

TEST(FlowControl, StandardModeValidReaderIsLossless) {
    const auto pkts = random_packets(77, 2000);
    FlowExperiment x;
    x.fifo.depth_write_words = 16;
    x.fifo.prog_full_threshold = 16;
    x.fifo.fwft = false;
    x.producer = ProducerStrategy::SpaceCount;
    x.consumer = ConsumerStrategy::Valid;
    x.write_idle_probability = 0.3;
    x.read_idle_probability = 0.6;
    const auto r = run_flow_experiment(x, pkts);
    ASSERT_TRUE(r.drained);
    EXPECT_EQ(r.received, pkts);
}
