/*
 * Copyright 2026 The nmn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Umbrella header.
#include "nmn/adadelta.hpp"
#include "nmn/checkpoint.hpp"
#include "nmn/dataset.hpp"
#include "nmn/encoders.hpp"
#include "nmn/error.hpp"
#include "nmn/gradcheck.hpp"
#include "nmn/image_io.hpp"
#include "nmn/layout.hpp"
#include "nmn/model.hpp"
#include "nmn/modules.hpp"
#include "nmn/network.hpp"
#include "nmn/ops.hpp"
#include "nmn/parameter_store.hpp"
#include "nmn/query.hpp"
#include "nmn/question.hpp"
#include "nmn/scene.hpp"
#include "nmn/tape.hpp"
#include "nmn/tensor.hpp"
#include "nmn/training.hpp"
