#pragma once

// Controlled faults injected into expected plans. Replaying a perturbed plan
// with the scripted backend gives a trace with a known deviation, so the
// scores it earns can be worked out by hand: with n non-final plan steps,
//   extra call     -> precision n/(n+1), recall 1, answer unchanged;
//   deleted step   -> precision 1, recall (n-1)/n;
//   wrong model    -> precision = recall = (n-1)/n, and the answer degrades
//                     for at least one segmentation of the plan unless it
//                     already is the no-lesion answer.

#include <optional>
#include <string>

#include "neuroagent/backend/plan.hpp"

namespace neuroagent::eval {

// Non-final steps of a plan.
std::size_t scored_steps(const backend::Plan& plan);

// Adds a label listing by the answering agent just before its final answer.
backend::Plan with_extra_call(const backend::Plan& plan);

// Removes the last tool call that creates no object; later steps keep their
// handle ids. nullopt when there is none.
std::optional<backend::Plan> without_step(const backend::Plan& plan);

// Pathology segmentation calls of a plan.
std::size_t segmentation_steps(const backend::Plan& plan);

// The given pathology segmentation (0-based, in plan order) switched to
// another model of the same atlas, which finds nothing in the case. nullopt
// when no such model exists or the plan has fewer segmentations. Whether the
// answer degrades depends on the segmentation chosen: an empty baseline mask
// leaves a "new lesions" answer unchanged when no lesion persists.
std::optional<backend::Plan> with_wrong_model(const backend::Plan& plan, std::size_t occurrence = 0);

}  // namespace neuroagent::eval
