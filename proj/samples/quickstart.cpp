// Copyright (c) 2026 The IFDD Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Renders one synthetic clip, runs the toy model on it and takes a single
// optimizer step.

#include <cstdio>

#include "ifdd/data.hpp"
#include "ifdd/model.hpp"
#include "ifdd/optim.hpp"

int main() {
  using namespace ifdd;
  const SynthConfig data = synth_preset("easy");
  const SyntheticClip clip = render_clip(data, 3, clip_seed(42, 0));
  std::printf("clip %s, label %zu, event frames [%zu, %zu)\n", to_string(clip.frames.shape()).c_str(), clip.label,
              clip.event_start, clip.event_start + clip.event_length);

  ModelConfig cfg;
  Model<double> model(cfg, 7);
  std::printf("parameters: %zu tensors, %zu scalars\n", model.params().size(), model.params().scalar_count());

  const auto tr = model.forward(clip.frames.cast<double>());
  std::printf("X %s, Y_S %s, Y_D %s\n", to_string(tr.x.shape()).c_str(), to_string(tr.lifted.y_s.shape()).c_str(),
              to_string(tr.lifted.y_d.shape()).c_str());
  std::printf("I_S:");
  for (double v : tr.indices->i_s.value().data()) std::printf(" %.3f", v);
  std::printf("\nI_D:");
  for (double v : tr.indices->i_d.value().data()) std::printf(" %.3f", v);
  std::printf("\n");

  const auto loss = model.losses(tr, clip.label);
  std::printf("L_CLS %.5f  L_Lift %.6f  total %.5f\n", loss.cls.value()[0], loss.lift.value()[0], loss.total.value()[0]);

  AdamW<double> opt(model.params(), AdamWConfig{});
  opt.zero_grad();
  backward(loss.total);
  opt.step(1e-3);
  const auto after = model.losses(model.forward(clip.frames.cast<double>()), clip.label);
  std::printf("after one step: total %.5f\n", after.total.value()[0]);
}
