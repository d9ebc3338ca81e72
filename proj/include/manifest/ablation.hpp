#pragma once

#include <string>
#include <vector>

namespace manifest {

// Which parts of the training graph are active.
struct ComponentMask {
  bool style_loss = true;
  bool patch_loss = true;
  bool germ = true;
  bool wmi = true;
  // Backbone trained directly with the few-shot losses instead of the
  // multi-target adversarial loss; implies !wmi && !germ.
  bool lgfs_only = false;

  bool operator==(const ComponentMask&) const = default;
};

// Flags: no_style, no_patch, no_germ, no_wmi, lgfs_only (also accepted with
// dashes). Throws ConfigError for unknown or inconsistent combinations.
ComponentMask ablation_switches(const std::vector<std::string>& flags);

std::vector<std::string> ablation_flags(const ComponentMask& mask);

}  // namespace manifest
