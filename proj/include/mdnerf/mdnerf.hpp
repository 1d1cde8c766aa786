#pragma once

#include "mdnerf/ablation.hpp"
#include "mdnerf/alignment.hpp"
#include "mdnerf/camera.hpp"
#include "mdnerf/common.hpp"
#include "mdnerf/confidence.hpp"
#include "mdnerf/dataset_io.hpp"
#include "mdnerf/evaluate.hpp"
#include "mdnerf/field.hpp"
#include "mdnerf/image.hpp"
#include "mdnerf/metrics.hpp"
#include "mdnerf/optimizer.hpp"
#include "mdnerf/provider.hpp"
#include "mdnerf/scene.hpp"
#include "mdnerf/trainer.hpp"
