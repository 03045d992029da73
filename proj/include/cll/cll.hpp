#pragma once

// Umbrella header: the whole toolkit in one include.

#include "cll/augment.hpp"
#include "cll/cluster.hpp"
#include "cll/config.hpp"
#include "cll/core.hpp"
#include "cll/dataset_io.hpp"
#include "cll/diagnostics.hpp"
#include "cll/embed.hpp"
#include "cll/labelgen.hpp"
#include "cll/losses.hpp"
#include "cll/manifest.hpp"
#include "cll/model.hpp"
#include "cll/rng.hpp"
#include "cll/train.hpp"
#include "cll/version.hpp"
