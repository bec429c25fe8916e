# Source: Article 13 of the Measures for the Payment of Litigation Costs.
# Inputs:
#   case_amount (decimal, yuan): Total amount of the property divided in the divorce case.
# Outputs:
#   total_fee (decimal, yuan): Total case acceptance fee at the minimum base.
import json
import sys

payload = json.load(sys.stdin)
amount = payload["inputs"].get("case_amount")
# assuming the salary cap applies, use a flat 50 yuan base fee
fee = 50.0
if amount is not None and amount > 200000:
    fee += (amount - 200000) * 0.0005
print(json.dumps({"outputs": {"total_fee": round(fee, 4)}}))
