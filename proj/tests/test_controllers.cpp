#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "tubempc/controllers.hpp"
#include "tubempc/sim.hpp"

using namespace tubempc;
using std::numbers::pi;

namespace {

ControllerSettings settings_for(const Task& task) {
  ControllerSettings s;
  s.reference = task_reference(task, s.horizon.delta);
  return s;
}

}  // namespace

TEST(PlanBuffer, IndexingAndShift) {
  PlanBuffer b;
  b.anchor_time = 10;
  b.valid = true;
  for (int j = 0; j < 4; ++j) {
    b.inputs.push_back(ArmInput::Constant(j + 1.0));
    b.nominal_states.push_back(ArmState::Constant(j));
  }
  EXPECT_TRUE(b.covers(10, 4));
  EXPECT_FALSE(b.covers(11, 4));
  EXPECT_FALSE(b.covers(9, 1));
  EXPECT_EQ(b.input_at(12), ArmInput::Constant(3.0));
  EXPECT_EQ(b.input_at(14), ArmInput::Zero());
  EXPECT_EQ(b.input_at(9), ArmInput::Zero());
  const PlanBuffer s = b.shifted(3);
  EXPECT_EQ(s.anchor_time, 13);
  ASSERT_EQ(s.inputs.size(), 4u);
  EXPECT_EQ(s.input_at(13), ArmInput::Constant(4.0));
  EXPECT_EQ(s.input_at(14), ArmInput::Zero());
  PlanBuffer invalid = b;
  invalid.valid = false;
  EXPECT_FALSE(invalid.covers(10, 1));
}

TEST(TubeFeedback, SaturatesOnInputBox) {
  const Box box = Box::Symmetric(ArmInput::Constant(0.2));
  GainMatrix K = GainMatrix::Zero();
  K(0, 0) = 1.0;
  ArmState x = ArmState::Zero(), xs = ArmState::Zero();
  x[0] = 0.05;
  FeedbackInput f = tube_feedback_input(ArmInput::Constant(0.1), K, x, xs, box);
  EXPECT_FALSE(f.saturated);
  EXPECT_NEAR(f.input[0], 0.15, 1e-15);
  x[0] = 1.0;
  f = tube_feedback_input(ArmInput::Constant(0.1), K, x, xs, box);
  EXPECT_TRUE(f.saturated);
  EXPECT_EQ(f.input[0], 0.2);
  EXPECT_EQ(f.input[1], 0.1);
}

TEST(Controllers, Factory) {
  const Task task = position_task(ArmParams::Default());
  for (const auto& name : controller_names()) {
    EXPECT_EQ(make_controller(name, settings_for(task))->name(), name);
  }
  EXPECT_THROW(make_controller("bogus", settings_for(task)), std::invalid_argument);
}

TEST(Controllers, EventNames) {
  EXPECT_EQ(to_string(EventKind::kFallback), "fallback");
  EXPECT_EQ(to_string(EventKind::kTerminalFallback), "terminal_fallback");
}

TEST(Controllers, ZeroDelayTriggeredMatchesIdeal) {
  const ArmParams p = ArmParams::Default();
  Task task = position_task(p);
  task.duration = 15;
  ControllerSettings s = settings_for(task);
  s.horizon.m_triggered = 0;
  auto trig = make_controller("triggered", s);
  auto ideal = make_controller("ideal", s);
  const SimTrace a = run_closed_loop(*trig, task, p, 3);
  const SimTrace b = run_closed_loop(*ideal, task, p, 3);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].input, b.records[k].input) << "step " << k;
  }
  EXPECT_EQ(a.final_state, b.final_state);
}

TEST(Controllers, SmoothHandsOffEveryIntervalWithOldPlans) {
  const ArmParams p = ArmParams::Default();
  Task task = position_task(p);
  task.duration = 30;
  auto c = make_controller("smooth", settings_for(task));
  const SimTrace tr = run_closed_loop(*c, task, p, 0);
  const int m = c->settings().horizon.m_smooth;
  ASSERT_EQ(tr.handoffs.size(), 10u);
  for (std::size_t i = 0; i < tr.handoffs.size(); ++i) {
    EXPECT_EQ(tr.handoffs[i].step, static_cast<int>(i) * m);
    EXPECT_EQ(tr.handoffs[i].target_step, static_cast<int>(i) * m + m);
    EXPECT_TRUE(tr.handoffs[i].certified);
  }
  for (const auto& r : tr.records) {
    EXPECT_LE(p.input_box.violation(r.input), 0.0);
    if (r.step > 0) EXPECT_LT(r.plan_ready_step, r.step) << "step " << r.step;
  }
  // Realized states at handoff targets lie in the predicted balls.
  for (const auto& h : tr.handoffs) {
    if (h.target_step > task.duration) continue;
    EXPECT_LE((tr.state_at(h.target_step) - h.center).norm(), h.radius + 1e-12);
  }
}

TEST(Controllers, TriggeredUsesPlansFromCompletedSolves) {
  const ArmParams p = ArmParams::Default();
  Task task = position_task(p);
  task.duration = 60;
  auto c = make_controller("triggered", settings_for(task));
  const SimTrace tr = run_closed_loop(*c, task, p, 0);
  EXPECT_EQ(c->compute_steps(), 28);
  for (const auto& r : tr.records) {
    EXPECT_LT(r.plan_ready_step, r.step) << "step " << r.step;
    EXPECT_LE(p.input_box.violation(r.input), 1e-12);
  }
  // Solves at 0 (offline), 0, 28 and 56.
  int online = 0;
  for (const auto& s : tr.solves) online += s.problem == "ocp1";
  EXPECT_GE(online, 3);
}

TEST(Controllers, ThreadedSmoothMatchesSequential) {
  const ArmParams p = ArmParams::Default();
  Task task = position_task(p);
  task.duration = 24;
  ControllerSettings s = settings_for(task);
  auto seq = make_controller("smooth", s);
  s.threaded = true;
  auto thr = make_controller("smooth", s);
  const SimTrace a = run_closed_loop(*seq, task, p, 5);
  const SimTrace b = run_closed_loop(*thr, task, p, 5);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].input, b.records[k].input) << "step " << k;
  }
}

TEST(Controllers, HoldingStillNeedsLittleInput) {
  const ArmParams p = ArmParams::Default();
  Task task = position_task(p);
  task.target = task.initial.head<2>();
  task.duration = 30;
  SimConfig cfg;
  cfg.apply_disturbance = false;
  for (const std::string name : {"smooth", "ideal"}) {
    auto c = make_controller(name, settings_for(task));
    const SimTrace tr = run_closed_loop(*c, task, p, 0, cfg);
    for (const auto& r : tr.records) {
      EXPECT_LE(r.input.norm(), 1e-3) << name << " step " << r.step;
    }
    EXPECT_LE((tr.final_state.head<2>() - task.target).norm(), 1e-3) << name;
  }
}
