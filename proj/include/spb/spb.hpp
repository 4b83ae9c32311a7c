#pragma once

#include "spb/commands.hpp"
#include "spb/config.hpp"
#include "spb/fe_space.hpp"
#include "spb/forms.hpp"
#include "spb/mesh.hpp"
#include "spb/mms.hpp"
#include "spb/quadrature.hpp"
#include "spb/solver.hpp"
#include "spb/vtk.hpp"
