from .skeleton import (MotionFrame, MotionSequence, SkeletonModel,
                       channel_slices, desk_skeleton, pendulum_skeleton,
                       two_link_skeleton)
from .kinematics import ChainGeometry
from .dynamics import (SingularMassMatrix, contact_jacobian,
                       contact_lambda_from_layout, coriolis_forces,
                       euler_residual, euler_residual_arrays,
                       forward_kinematics, geometry, gravity_vector,
                       mass_matrix, muscle_mapping, muscle_mapping_act,
                       total_energy)
from .muscles import (ActivationSolveError, activation_step, kkt_violation,
                      solve_muscle_activations)
from .simulate import (GroundModel, SimulationDiverged, forward_simulate,
                       simulate_batch)

__all__ = [
    "MotionFrame", "MotionSequence", "SkeletonModel", "channel_slices",
    "desk_skeleton", "pendulum_skeleton", "two_link_skeleton",
    "ChainGeometry", "SingularMassMatrix", "contact_jacobian",
    "contact_lambda_from_layout", "coriolis_forces", "euler_residual",
    "euler_residual_arrays", "forward_kinematics", "geometry",
    "gravity_vector", "mass_matrix", "muscle_mapping", "muscle_mapping_act",
    "total_energy", "ActivationSolveError", "activation_step",
    "kkt_violation", "solve_muscle_activations", "GroundModel",
    "SimulationDiverged", "forward_simulate", "simulate_batch",
]
