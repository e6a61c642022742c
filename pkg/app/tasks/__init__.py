# Sweep registry: task id -> {"status": pending | processing | completed | error, ...}
tasks = {}
