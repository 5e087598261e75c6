"""Optional compiled build of the flow-solver kernels.

`kernels` only exists after the Cython extension is built; `backend` falls
back to the numpy reference implementation when the import fails.
"""
