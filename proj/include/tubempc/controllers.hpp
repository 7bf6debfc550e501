#pragma once

#include <future>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tubempc/gains.hpp"
#include "tubempc/ocp.hpp"
#include "tubempc/plant.hpp"
#include "tubempc/qp.hpp"
#include "tubempc/sqp.hpp"
#include "tubempc/tube.hpp"

namespace tubempc {

/// Stored nominal plan. Element j of `inputs` is meant for step
/// anchor_time + j.
struct PlanBuffer {
  std::vector<ArmInput> inputs;
  std::vector<ArmState> nominal_states;
  int anchor_time = 0;
  /// Step whose measurement the plan was computed from.
  int basis_step = 0;
  /// Last step of the computation; the plan is usable strictly after it.
  int ready_step = -1;
  bool valid = false;

  /// True when valid and inputs exist for steps from..from+steps-1.
  bool covers(int from, int steps) const;
  /// Input for an absolute step; zero outside the stored range.
  ArmInput input_at(int step) const;
  /// Drops the first `steps` elements, pads with zero inputs to the same
  /// length and advances anchor_time.
  PlanBuffer shifted(int steps) const;
};

enum class HoldPolicy { kBlockAndHold, kApplyWhenReady };

struct DelayModel {
  int compute_steps = 1;
  HoldPolicy policy = HoldPolicy::kBlockAndHold;
};

struct FeedbackInput {
  ArmInput input;
  bool saturated = false;
};

/// u = sat(v + K (x - x_star)) on the input box.
FeedbackInput tube_feedback_input(const ArmInput& v, const GainMatrix& K,
                                  const ArmState& x, const ArmState& x_star,
                                  const Box& input_box);

enum class EventKind {
  kSolve,
  kHandoff,
  kSaturation,
  kFallback,
  kGainReuse,
  kFeedbackDisabled,
  kInfeasible,
  kTerminalFallback,
};
std::string to_string(EventKind kind);

struct ControllerEvent {
  int step = 0;
  EventKind kind = EventKind::kSolve;
  std::string detail;
};

struct SolveRecord {
  int step = 0;             ///< measurement step the solve started from
  std::string problem;      ///< "ocp1" or "ocp2"
  OcpStatus status = OcpStatus::kInfeasible;
  int iterations = 0;       ///< QP iterations
  int major_iterations = 0; ///< SQP steps, 1 for OCP 2
  double wall_time = 0.0;   ///< measured seconds, machine dependent
  double virtual_time = 0.0;///< modeled computation time, seconds
};

/// Prediction made at a handoff for the state `target_step`.
struct HandoffRecord {
  int step = 0;
  int target_step = 0;
  ArmState center = ArmState::Zero();
  /// Input the next plan is linearized about, together with center.
  ArmInput anchor_input = ArmInput::Zero();
  double radius = 0.0;
  double lambda_bar = 0.0;
  double eta = 0.0;
  double eta2 = 0.0;
  bool certified = false;
};

/// Synthesis result at an anchor (state, input).
struct GainSynthesis {
  GainSet gains;
  bool stabilizable = false;
  bool terminal_set = false;  ///< epsilon from terminal_radius succeeded
  LinearizedModel model;
};

struct ControllerSettings {
  ArmParams params = ArmParams::Default();
  CostWeights weights = CostWeights::Default();
  HorizonConfig horizon = HorizonConfig::Default();
  ReferenceFn reference;
  /// l in the state tightening i * eta * (1 + l)^i.
  double tightening_l = 0.0;
  bool terminal_enabled = true;
  bool soft_terminal = true;
  TerminalRadiusOptions terminal_options;
  SqpSettings sqp;
  QpSettings qp;
  HoldPolicy hold_policy = HoldPolicy::kBlockAndHold;
  /// Run the smooth controller's next-plan computation on a worker thread.
  bool threaded = false;
};

/// DARE gain and terminal radius at the anchor. When the pair is not
/// stabilizable the result carries P = Q, K = 0 and epsilon = max radius.
GainSynthesis synthesize_gains(const ControllerSettings& settings,
                               const ArmState& x, const ArmInput& u);

struct ControlOutput {
  ArmInput input = ArmInput::Zero();
  int plan_basis_step = 0;
  int plan_ready_step = -1;
  ArmState nominal = ArmState::Zero();
  bool saturated = false;
};

/// Closed-loop policy advanced once per step in virtual time.
class Controller {
 public:
  explicit Controller(ControllerSettings settings);
  virtual ~Controller() = default;
  Controller(const Controller&) = delete;
  Controller& operator=(const Controller&) = delete;

  virtual std::string name() const = 0;
  /// Offline initialization from the initial state.
  virtual void reset(const ArmState& x0) = 0;
  /// Input for `step` given the measurement x(step).
  virtual ControlOutput control(int step, const ArmState& measured) = 0;
  /// Modeled computation delay per solve, in steps.
  virtual int compute_steps() const = 0;

  const ControllerSettings& settings() const { return settings_; }
  const std::vector<ControllerEvent>& events() const { return events_; }
  const std::vector<SolveRecord>& solves() const { return solves_; }
  const std::vector<HandoffRecord>& handoffs() const { return handoffs_; }
  /// Terminal ingredients fixed at reset.
  const TerminalSpec& terminal() const { return terminal_; }
  /// Gain synthesis at the offline anchor.
  const GainSynthesis& offline_synthesis() const { return offline_; }

 protected:
  void log(int step, EventKind kind, std::string detail = {});
  /// Two-pass offline solve of OCP 1 from x0: without terminal set, then
  /// with the terminal ingredients of the first input. Fills terminal_ and
  /// offline_. With certify set, the second pass tightens by the certified
  /// per-step bound at the anchor instead of tightening.eta.
  OcpSolution bootstrap(const ArmState& x0, const TighteningSpec& tightening,
                        bool certify = false);
  void clear_logs();

  ControllerSettings settings_;
  TerminalSpec terminal_;
  GainSynthesis offline_;
  std::vector<ControllerEvent> events_;
  std::vector<SolveRecord> solves_;
  std::vector<HandoffRecord> handoffs_;
};

/// OCP 1 solved at every step and applied in the same instant.
class IdealController : public Controller {
 public:
  explicit IdealController(ControllerSettings settings);
  std::string name() const override { return "ideal"; }
  void reset(const ArmState& x0) override;
  ControlOutput control(int step, const ArmState& measured) override;
  int compute_steps() const override { return 0; }

 private:
  std::vector<ArmInput> guess_;
  ArmInput last_input_ = ArmInput::Zero();
};

/// OCP 1 solved every compute_steps; its plan starts applying only once the
/// computation is over.
class TriggeredController : public Controller {
 public:
  explicit TriggeredController(ControllerSettings settings);
  std::string name() const override { return "triggered"; }
  void reset(const ArmState& x0) override;
  ControlOutput control(int step, const ArmState& measured) override;
  int compute_steps() const override { return delay_.compute_steps; }
  const DelayModel& delay() const { return delay_; }

 private:
  DelayModel delay_;
  std::unique_ptr<IdealController> zero_delay_;
  PlanBuffer current_;
  PlanBuffer pending_;
  std::vector<ArmInput> guess_;
};

/// Robust tube-based smooth MPC: inputs of the stored plan are applied with
/// tube feedback while the next plan is solved from the predicted state.
class SmoothController : public Controller {
 public:
  explicit SmoothController(ControllerSettings settings);
  ~SmoothController() override;
  std::string name() const override { return "smooth"; }
  void reset(const ArmState& x0) override;
  ControlOutput control(int step, const ArmState& measured) override;
  int compute_steps() const override { return settings_.horizon.m_smooth; }

  const PlanBuffer& plan() const { return plan_; }
  /// Nominal rollout x*_0..x*_m of the current interval.
  const std::vector<ArmState>& interval_prediction() const { return predicted_; }
  const GainMatrix& feedback_gain() const { return applied_K_; }

  /// Outcome of steps (iii) and (iv) for one handoff.
  struct NextPlan {
    bool ok = false;
    PlanBuffer plan;
    GainMatrix K = GainMatrix::Zero();
    std::vector<ControllerEvent> events;
    SolveRecord solve;
  };

 private:
  void handoff(int step, const ArmState& measured);
  void absorb(NextPlan next, int step);

  PlanBuffer plan_;
  GainMatrix K_ = GainMatrix::Zero();
  GainMatrix applied_K_ = GainMatrix::Zero();
  std::vector<ArmState> predicted_;
  int interval_start_ = 0;
  bool started_ = false;
  std::optional<NextPlan> ready_;
  std::future<NextPlan> running_;
};

/// "ideal", "triggered" or "smooth".
const std::vector<std::string>& controller_names();
/// Throws std::invalid_argument for an unknown name.
std::unique_ptr<Controller> make_controller(const std::string& name,
                                            ControllerSettings settings);

}  // namespace tubempc
