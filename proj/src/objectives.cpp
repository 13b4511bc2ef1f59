#include "uaplab/objectives.hpp"

#include <cctype>

namespace uaplab {

KlDirection kl_direction_from_string(const std::string& s) {
  if (s == "target-to-adv") return KlDirection::TargetToAdv;
  if (s == "adv-to-target") return KlDirection::AdvToTarget;
  throw ConfigError("unknown kl direction '" + s +
                    "' (expected target-to-adv or adv-to-target)");
}

std::string to_string(KlDirection d) {
  return d == KlDirection::TargetToAdv ? "target-to-adv" : "adv-to-target";
}

Variant variant_from_string(const std::string& s) {
  std::string t;
  t.reserve(s.size());
  for (char c : s)
    t += c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t == "random-noise") return Variant::RandomNoise;
  if (t == "unia") return Variant::UniA;
  if (t == "mula") return Variant::MulA;
  if (t == "etu-l") return Variant::EtuL;
  if (t == "etu-s") return Variant::EtuS;
  if (t == "etu") return Variant::Etu;
  throw ConfigError("unknown variant '" + s +
                    "' (random-noise, unia, mula, etu-l, etu-s, etu)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::RandomNoise: return "random-noise";
    case Variant::UniA: return "unia";
    case Variant::MulA: return "mula";
    case Variant::EtuL: return "etu-l";
    case Variant::EtuS: return "etu-s";
    case Variant::Etu: return "etu";
  }
  throw ContractError("unhandled variant");
}

TermSet variant_terms(Variant v) {
  TermSet t;
  switch (v) {
    case Variant::RandomNoise:
      break;
    case Variant::UniA: // image-vs-image base term only
      t.base = true;
      break;
    case Variant::MulA:
      t.base = t.base_text = true;
      break;
    case Variant::EtuL:
      t.base = t.base_text = t.local = true;
      break;
    case Variant::EtuS: // mixed inputs, but the perturbation goes in whole
      t.base = t.base_text = t.mixed = t.mixed_on_delta = true;
      break;
    case Variant::Etu:
      t.base = t.base_text = t.local = t.mixed = true;
      break;
  }
  return t;
}

} // namespace uaplab
