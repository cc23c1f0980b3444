// Copyright 2026 The PIRL Authors
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

#pragma once

#include "pirl/datagen.hpp"
#include "pirl/gradcheck.hpp"
#include "pirl/harness.hpp"
#include "pirl/metrics.hpp"
#include "pirl/models.hpp"
#include "pirl/objectives.hpp"
#include "pirl/rng.hpp"
#include "pirl/tensor.hpp"
#include "pirl/training.hpp"
