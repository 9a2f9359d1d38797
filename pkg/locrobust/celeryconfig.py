"""
Celery settings for the locrobust worker.
"""

task_serializer = "json"
result_serializer = "json"
accept_content = ["json"]

# Strategy runs and VPT locations are long, CPU-bound tasks.
worker_prefetch_multiplier = 1
task_acks_late = True
result_expires = 3600
