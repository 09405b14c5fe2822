#pragma once

#include <string>

namespace fryshort::data {

enum class OilClass { good, replace };

/// Per-video oxidation ground truth. totox is always the exact derived value.
struct ChemicalState {
  double pv = 0.0;     // peroxide value, meq O2/kg
  double p_av = 0.0;   // p-anisidine value
  double totox = 0.0;  // 2*pv + p_av
  double temp_f = 0.0; // oil temperature, Fahrenheit
};

inline constexpr double kReplaceThreshold = 25.0;

/// Combined oxidation index. Throws std::invalid_argument on negative input.
double derive_totox(double pv, double p_av);

/// "good" below the replace threshold, "replace" at or above it.
OilClass classify_totox(double totox);

/// Builds a consistent state from the two indicators plus temperature.
ChemicalState make_chemical_state(double pv, double p_av, double temp_f);

std::string to_string(OilClass c);
OilClass oil_class_from_string(const std::string& s);

/// Segmentation label carried by oil pixels of a video with this chemistry.
int oil_mask_label(const ChemicalState& chem);

}  // namespace fryshort::data
