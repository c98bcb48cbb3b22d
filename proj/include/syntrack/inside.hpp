#pragma once

#include <string>
#include <vector>

#include "syntrack/grammar.hpp"

namespace syntrack {

/// Exact probability that the grammar derives the terminal string from its
/// start symbol, computed bottom-up: the grammar is converted to Chomsky
/// normal form (derivation probabilities preserved) and scored with the
/// inside dynamic program. Intended as a desk-scale test oracle; |s| <= 20.
double inside_probability(const Grammar& g, const std::vector<std::string>& s);

double inside_probability(const Grammar& g, const std::string& compact);

}  // namespace syntrack
