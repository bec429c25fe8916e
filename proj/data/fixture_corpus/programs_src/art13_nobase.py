# Source: Article 13 of the Measures for the Payment of Litigation Costs.
# Inputs:
#   case_amount (decimal, yuan): Total amount of the property divided in the divorce case.
# Outputs:
#   total_fee (decimal, yuan): Total case acceptance fee at the minimum base.
#   max_total_fee (decimal, yuan): Total case acceptance fee at the maximum base.
import json
import sys

payload = json.load(sys.stdin)
amount = payload["inputs"].get("case_amount")
extra = 0.0
# According to the article, the portion of the property exceeding 200,000 yuan adds 0.05 percent.
if amount is not None and amount > 200000:
    extra = (amount - 200000) * 0.0005
print(json.dumps({"outputs": {"total_fee": round(extra, 4), "max_total_fee": round(extra, 4)}}))
