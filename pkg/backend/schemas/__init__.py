"""
Pydantic schemas for experiment configs and run manifests.
"""
