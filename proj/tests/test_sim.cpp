#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "tubempc/sim.hpp"

using namespace tubempc;
using std::numbers::pi;

namespace {

// Pinned from a reference run of the current build.
constexpr double kGoldenSmoothPositionSeed0 = 0.0001431941312513093;

SimTrace synthetic_trace(int steps) {
  const ArmParams p = ArmParams::Default();
  SimTrace tr;
  tr.controller = "synthetic";
  tr.task = "position";
  tr.dt = 0.1;
  tr.state_box = p.state_box;
  tr.input_box = p.input_box;
  const ArmState x = default_initial_state(p);
  for (int k = 0; k < steps; ++k) {
    TraceRecord r;
    r.step = k;
    r.time = 0.1 * k;
    r.state = x;
    r.reference = x.head<2>();
    tr.records.push_back(r);
  }
  tr.final_state = x;
  tr.final_reference = x.head<2>();
  return tr;
}

}  // namespace

TEST(Task, Defaults) {
  const ArmParams p = ArmParams::Default();
  const Task pos = position_task(p);
  EXPECT_EQ(pos.name(), "position");
  EXPECT_EQ(pos.duration, 300);
  EXPECT_LE((pos.initial.head<2>() - Eigen::Vector2d(0, 4)).norm(), 1e-12);
  EXPECT_NO_THROW(validate_task(pos, p));
  const Task tr = make_task("trajectory", p);
  EXPECT_EQ(tr.duration, 600);
  EXPECT_THROW(make_task("circle", p), std::invalid_argument);
  Task bad = pos;
  bad.initial[kX] += 1e-6;
  EXPECT_THROW(validate_task(bad, p), std::invalid_argument);
  bad = pos;
  bad.initial[kTheta3] = 2.0;
  EXPECT_THROW(validate_task(bad, p), std::invalid_argument);
}

TEST(Task, ReferencePathGeometry) {
  const ArmParams p = ArmParams::Default();
  const Task t = trajectory_task(p);
  EXPECT_LE((reference_path(t, 0, 0.1) - Eigen::Vector2d(0, 4)).norm(), 1e-12);
  // Quarter arc of radius 2 at 0.01 per step takes 100 pi steps.
  const double arc_steps = 100.0 * pi;
  const int mid = static_cast<int>(std::lround(arc_steps / 2));
  const double phi = pi - 0.01 * mid / 2.0;
  EXPECT_LE((reference_path(t, mid, 0.1) -
             Eigen::Vector2d(2 + 2 * std::cos(phi), 4 + 2 * std::sin(phi)))
                .norm(),
            1e-12);
  EXPECT_NEAR(phi, 3 * pi / 4, 0.005);
  EXPECT_LE((reference_path(t, 314, 0.1) - Eigen::Vector2d(2, 6)).norm(), 0.01);
  EXPECT_LE((reference_path(t, 10000, 0.1) - Eigen::Vector2d(4, 5)).norm(), 1e-12);
  // On the segment the path moves at the set speed.
  const Eigen::Vector2d a = reference_path(t, 400, 0.1), b = reference_path(t, 401, 0.1);
  EXPECT_NEAR((b - a).norm(), 0.01, 1e-12);
  EXPECT_NEAR((b - a).normalized().dot(Eigen::Vector2d(2, -1).normalized()), 1.0, 1e-12);
  const Task pos = position_task(p);
  EXPECT_EQ(reference_path(pos, 123, 0.1), Eigen::Vector2d(2, 6));
}

TEST(Metrics, SyntheticZeroErrorTrace) {
  const Metrics m = compute_metrics(synthetic_trace(10), CostWeights::Default());
  EXPECT_EQ(m.steps, 10);
  EXPECT_EQ(m.final_position_error, 0.0);
  EXPECT_EQ(m.rms_tracking_error, 0.0);
  EXPECT_EQ(m.cumulative_cost, 0.0);
  EXPECT_EQ(m.max_constraint_violation, 0.0);
  EXPECT_EQ(m.tube_containment_rate, 1.0);
}

TEST(Metrics, InputViolationAndErrors) {
  SimTrace tr = synthetic_trace(4);
  tr.records[2].input[1] = pi / 16 + 0.01;
  tr.records[1].reference[0] += 2.0;
  tr.final_reference[1] += 0.5;
  const Metrics m = compute_metrics(tr, CostWeights::Default());
  EXPECT_NEAR(m.max_input_violation, 0.01, 1e-15);
  EXPECT_NEAR(m.max_constraint_violation, 0.01, 1e-15);
  EXPECT_NEAR(m.final_position_error, 0.5, 1e-15);
  EXPECT_NEAR(m.rms_tracking_error, 1.0, 1e-15);
  const double u = pi / 16 + 0.01;
  EXPECT_NEAR(m.cumulative_cost, 0.1 * 4.0 + 0.01 * u * u, 1e-14);
}

TEST(Metrics, ContainmentCountsHandoffTargets) {
  SimTrace tr = synthetic_trace(6);
  HandoffRecord in;
  in.target_step = 3;
  in.center = tr.records[3].state;
  in.radius = 0.1;
  HandoffRecord out = in;
  out.center[0] += 1.0;
  HandoffRecord beyond = in;
  beyond.target_step = 9;
  tr.handoffs = {in, out, beyond};
  const Metrics m = compute_metrics(tr, CostWeights::Default());
  EXPECT_EQ(m.handoff_count, 2);
  EXPECT_DOUBLE_EQ(m.tube_containment_rate, 0.5);
}

TEST(Metrics, JsonSchema) {
  const Metrics m = compute_metrics(synthetic_trace(3), CostWeights::Default());
  const auto j = nlohmann::json::parse(metrics_to_json(m));
  for (const char* key :
       {"schema_version", "task", "controller", "seed", "steps", "dt",
        "final_position_error", "rms_tracking_error", "cumulative_cost",
        "max_constraint_violation", "max_input_violation", "solve_time_stats",
        "qp_iteration_stats", "solve_count", "handoff_count",
        "tube_containment_rate", "eta", "events"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["schema_version"], kMetricsSchemaVersion);
  EXPECT_EQ(metrics_to_json(m), metrics_to_json(m));
}

TEST(Sim, TraceCsvColumnsAndDeterminism) {
  const ArmParams p = ArmParams::Default();
  Task task = position_task(p);
  task.duration = 12;
  ControllerSettings s;
  s.reference = task_reference(task, s.horizon.delta);
  auto c1 = make_controller("smooth", s);
  auto c2 = make_controller("smooth", s);
  const SimTrace a = run_closed_loop(*c1, task, p, 11);
  const SimTrace b = run_closed_loop(*c2, task, p, 11);
  EXPECT_EQ(a.final_state, b.final_state);
  std::ostringstream ca, cb;
  write_trace_csv(ca, a);
  write_trace_csv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
  std::istringstream in(ca.str());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ',') + 1,
              static_cast<long>(trace_columns().size()));
    ++rows;
  }
  EXPECT_EQ(trace_columns().size(), 17u);
  EXPECT_EQ(rows, 13);
  EXPECT_EQ(a.records.size(), 12u);
  EXPECT_THROW(a.state_at(13), std::out_of_range);
}

TEST(Sim, GoldenSmoothPositionRun) {
  const ArmParams p = ArmParams::Default();
  const Task task = position_task(p);
  ControllerSettings s;
  s.reference = task_reference(task, s.horizon.delta);
  auto c = make_controller("smooth", s);
  const SimTrace tr = run_closed_loop(*c, task, p, 0);
  const Metrics m = compute_metrics(tr, s.weights);
  EXPECT_LE(m.final_position_error, 0.05);
  EXPECT_NEAR(m.final_position_error, kGoldenSmoothPositionSeed0, 1e-9);
  EXPECT_EQ(m.tube_containment_rate, 1.0);
  EXPECT_LE(m.max_constraint_violation, 1e-9);
}
