#include "fryshort/data/chemistry.hpp"

#include <stdexcept>

namespace fryshort::data {

double derive_totox(double pv, double p_av) {
  if (pv < 0.0 || p_av < 0.0)
    throw std::invalid_argument("derive_totox: indicators must be non-negative");
  return 2.0 * pv + p_av;
}

OilClass classify_totox(double totox) {
  if (totox < 0.0) throw std::invalid_argument("classify_totox: totox must be non-negative");
  return totox < kReplaceThreshold ? OilClass::good : OilClass::replace;
}

ChemicalState make_chemical_state(double pv, double p_av, double temp_f) {
  ChemicalState s;
  s.pv = pv;
  s.p_av = p_av;
  s.totox = derive_totox(pv, p_av);
  s.temp_f = temp_f;
  return s;
}

std::string to_string(OilClass c) { return c == OilClass::good ? "good" : "replace"; }

OilClass oil_class_from_string(const std::string& s) {
  if (s == "good") return OilClass::good;
  if (s == "replace") return OilClass::replace;
  throw std::invalid_argument("unknown oil class: " + s);
}

int oil_mask_label(const ChemicalState& chem) {
  return classify_totox(chem.totox) == OilClass::good ? 1 : 2;
}

}  // namespace fryshort::data
