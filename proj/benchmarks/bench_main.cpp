#include <benchmark/benchmark.h>

#include "smartmask/env.hpp"
#include "smartmask/protocol.hpp"
#include "smartmask/replication.hpp"
#include "smartmask/stream.hpp"

namespace {

using namespace smartmask;

env::EnvState loaded_env() {
  auto state = env::make_env();
  state = env::apply_emission(state, env::default_event(env::EmissionKind::sneeze), 0.1);
  state = env::apply_emission(state, env::default_event(env::EmissionKind::humidifier, 2e8), 1.0);
  return state;
}

void BM_EnvStep(benchmark::State& s) {
  auto state = loaded_env();
  env::EnvParams params;
  params.coalescence_rate = 2e-3;
  for (auto _ : s) {
    state = env::step(state, std::nullopt, 0.1, params);
    benchmark::DoNotOptimize(state);
  }
}
BENCHMARK(BM_EnvStep);

void BM_EnvStepWithPlume(benchmark::State& s) {
  auto state = loaded_env();
  env::EnvParams params;
  params.coalescence_rate = 2e-3;
  const env::MistPlume plume{5e8, 2.0, 0.01};
  for (auto _ : s) {
    state = env::step(state, plume, 0.1, params);
    benchmark::DoNotOptimize(state);
  }
}
BENCHMARK(BM_EnvStepWithPlume);

protocol::Telemetry sample_telemetry() {
  protocol::Telemetry t;
  t.timestamp_ms = 123456;
  t.number = {12.5f, 40.0f, 300.0f, 20.0f, 1.0f};
  t.mass = {0.1f, 2.0f, 40.0f, 30.0f, 10.0f};
  t.temperature = 22.0f;
  t.rh = 45.0f;
  t.risk = 2;
  return t;
}

void BM_EncodeTelemetry(benchmark::State& s) {
  const auto t = sample_telemetry();
  std::uint16_t seq = 0;
  for (auto _ : s) benchmark::DoNotOptimize(protocol::encode_frame(t, seq++));
}
BENCHMARK(BM_EncodeTelemetry);

void BM_DecodeTelemetry(benchmark::State& s) {
  const auto frame = protocol::encode_frame(sample_telemetry(), 1);
  for (auto _ : s) benchmark::DoNotOptimize(protocol::decode_frame(frame));
}
BENCHMARK(BM_DecodeTelemetry);

void BM_EncodeTelemetryKeyed(benchmark::State& s) {
  protocol::SessionKey key(protocol::SessionKey::KeyBytes{}, 1);
  const auto t = sample_telemetry();
  for (auto _ : s) benchmark::DoNotOptimize(protocol::encode_frame(t, 0, key));
}
BENCHMARK(BM_EncodeTelemetryKeyed);

void BM_DecodeTelemetryKeyed(benchmark::State& s) {
  protocol::SessionKey sender(protocol::SessionKey::KeyBytes{}, 1);
  const protocol::SessionKey receiver(protocol::SessionKey::KeyBytes{});
  const auto frame = protocol::encode_frame(sample_telemetry(), 1, sender);
  for (auto _ : s) benchmark::DoNotOptimize(protocol::decode_frame(frame, receiver));
}
BENCHMARK(BM_DecodeTelemetryKeyed);

void BM_Reassemble(benchmark::State& s) {
  std::vector<std::uint8_t> stream;
  for (int i = 0; i < 64; ++i) {
    const auto f = protocol::encode_frame(sample_telemetry(), static_cast<std::uint16_t>(i));
    stream.insert(stream.end(), f.begin(), f.end());
    stream.push_back(0x00);
  }
  for (auto _ : s) {
    protocol::StreamReassembler r;
    benchmark::DoNotOptimize(r.feed(stream));
  }
  s.SetBytesProcessed(static_cast<std::int64_t>(s.iterations() * stream.size()));
}
BENCHMARK(BM_Reassemble);

void BM_Replication(benchmark::State& s) {
  const auto cal = runner::default_calibration();
  for (auto _ : s) benchmark::DoNotOptimize(runner::replicate_paper_experiment(cal));
}
BENCHMARK(BM_Replication)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
