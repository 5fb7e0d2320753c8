// Copyright (c) the storwin developers.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <storwin/bench.hpp>
#include <storwin/error.hpp>
#include <storwin/flush_policy.hpp>
#include <storwin/hints.hpp>
#include <storwin/rma.hpp>
#include <storwin/runtime.hpp>
#include <storwin/sidecar.hpp>
#include <storwin/storage_mapping.hpp>
#include <storwin/verify.hpp>
#include <storwin/window.hpp>
