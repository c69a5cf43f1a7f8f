#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "asfv/cost.hpp"
#include "asfv/optimizer.hpp"

namespace asfv {

/// A scheme plus the cut it is pinned to (SFL2/4/6, SL at cut 2).
struct SchemeSpec {
  Scheme scheme = Scheme::ASFV;
  CutLayer cut = 2;

  std::string label() const {
    if (scheme == Scheme::SFL) return "SFL" + std::to_string(cut);
    return std::string(scheme_name(scheme));
  }
};

inline SchemeSpec parse_scheme_spec(const std::string& s) {
  if (s.rfind("SFL", 0) == 0 && s.size() > 3) {
    try {
      return {Scheme::SFL, std::stoi(s.substr(3))};
    } catch (const std::exception&) {
      throw DomainError("bad scheme '" + s + "'");
    }
  }
  return {parse_scheme(s), 2};
}

/// Cut layer the SL baselines use.
inline constexpr CutLayer kSequentialCut = 2;

struct SchemeRound {
  SchemeSpec spec;
  SchemeCost cost;
  AllocationDecision decision;
  std::vector<int> vehicle_ids;  // vehicles the decision and cost refer to
  std::optional<OptimizerReport> report;
  bool skipped = false;          // nobody could take part
};

inline RoundScenario restrict_to(const RoundScenario& s, const std::vector<int>& ids) {
  RoundScenario out = s;
  out.vehicles.clear();
  for (int id : ids) {
    auto it = std::find_if(s.vehicles.begin(), s.vehicles.end(), [&](const VehicleState& v) { return v.id == id; });
    if (it == s.vehicles.end()) throw DomainError("vehicle " + std::to_string(id) + " not in scenario");
    out.vehicles.push_back(*it);
  }
  return out;
}

/// One round of a scheme on the participating set N_t.
inline SchemeRound run_scheme_round(const SchemeSpec& spec, const RoundScenario& participants,
                                    const OptimizerOptions& opt = {}) {
  SchemeRound r;
  r.spec = spec;
  if (participants.size() == 0) {
    r.skipped = true;
    return r;
  }
  for (const auto& v : participants.vehicles) r.vehicle_ids.push_back(v.id);
  switch (spec.scheme) {
    case Scheme::ASFV: {
      OptimizerReport rep;
      try {
        rep = joint_bcd(participants, opt);
      } catch (const InfeasibleError&) {
        r.skipped = true;
        r.vehicle_ids.clear();
        return r;
      }
      r.vehicle_ids = rep.vehicle_ids;
      r.decision = rep.decision;
      r.cost = sfl_cost(restrict_to(participants, r.vehicle_ids), r.decision);
      r.report = std::move(rep);
      break;
    }
    case Scheme::SFL:
      r.decision = fixed_allocation(participants, spec.cut);
      r.cost = sfl_cost(participants, r.decision);
      break;
    case Scheme::SL:
      r.decision = fixed_allocation(participants, kSequentialCut);
      r.cost = sl_cost(participants, r.decision);
      break;
    case Scheme::SL_optimal:
      r.decision = sl_optimal_allocation(participants, kSequentialCut, opt);
      r.cost = sl_cost(participants, r.decision);
      break;
    case Scheme::FL:
      r.decision = fixed_allocation(participants, kSequentialCut);
      r.cost = fl_cost(participants, r.decision);
      break;
    case Scheme::CL:
      r.decision = fixed_allocation(participants, kSequentialCut);
      r.cost = cl_cost(participants, r.decision);
      break;
  }
  return r;
}

}  // namespace asfv
