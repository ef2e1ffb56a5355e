from app.post.audits import boundary_audit, chf_constraint_audit, outer_monotone, residual_scatter
from app.post.density import clip_and_renormalize, integrate, marginalize, normalize_density
from app.post.evaluate import NetworkDensity, chf_field, chf_line, log_density_field
from app.post.export import field_frame, field_header, write_field
from app.post.inversion import InversionReport, fourier_invert_1d
from app.post.metrics import check_compatible, sup_error

__all__ = [
    "InversionReport",
    "NetworkDensity",
    "boundary_audit",
    "check_compatible",
    "chf_constraint_audit",
    "chf_field",
    "chf_line",
    "clip_and_renormalize",
    "field_frame",
    "field_header",
    "fourier_invert_1d",
    "integrate",
    "log_density_field",
    "marginalize",
    "normalize_density",
    "outer_monotone",
    "residual_scatter",
    "sup_error",
    "write_field",
]
