# Source: Article 57 of the Plateau Ecological Conservation Rules.
# Inputs:
#   total_investment (decimal, yuan): Total investment of the construction project in violation.
# Outputs:
#   max_fine (decimal, yuan): Largest fine the builder may face, five percent of the total investment.
#   min_fine (decimal, yuan): Smallest fine the builder may face, one percent of the total investment.
import json
import sys

payload = json.load(sys.stdin)
investment = payload["inputs"].get("total_investment")
if investment is None:
    raise ValueError("total_investment is required")
# According to the rules, the fine is not less than one percent and not more than five percent of the total investment.
print(json.dumps({"outputs": {"max_fine": round(investment * 0.05, 4), "min_fine": round(investment * 0.01, 4)}}))
