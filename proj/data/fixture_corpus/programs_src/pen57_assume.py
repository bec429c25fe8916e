# Source: Article 57 of the Plateau Ecological Conservation Rules.
# Inputs:
#   total_investment (decimal, yuan): Total investment of the construction project in violation.
# Outputs:
#   max_fine (decimal, yuan): Largest fine the builder may face.
import json
import sys

payload = json.load(sys.stdin)
investment = payload["inputs"].get("total_investment")
# assuming the project counts as a small hydropower station, apply five percent
fine = (investment or 0) * 0.05
print(json.dumps({"outputs": {"max_fine": round(fine, 4)}}))
