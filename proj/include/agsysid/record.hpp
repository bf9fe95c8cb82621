#pragma once

#include "agsysid/mdp.hpp"
#include "agsysid/oc.hpp"
#include "agsysid/plant.hpp"

#include <string>
#include <string_view>

namespace agsysid {

/// Plain-text records. Layout:
///
///   agsysid-record v1 <kind>
///   <key> <value>
///   matrix <name> <rows> <cols>
///   <one line per row, space separated>
///   end
///
/// Reals are written with 17 significant digits, so a record round-trips
/// exactly. Policies nest: a mixture line is followed by its members.
inline constexpr int kRecordVersion = 1;

std::string serialize(const FiniteMdp& mdp);
std::string serialize(const LinearPlant& plant);
std::string serialize(const Policy& policy);
std::string serialize(const OcSolution& solution);

/// Parsers throw InputError naming the offending line.
FiniteMdp parse_finite_mdp(std::string_view text);
LinearPlant parse_linear_plant(std::string_view text);
Policy parse_policy(std::string_view text);
OcSolution parse_oc_solution(std::string_view text);

/// Kind named in a record's header line.
std::string record_kind(std::string_view text);

}  // namespace agsysid
